//! FSIM / FSIM_c: phase congruency and gradient magnitude similarity, with
//! YIQ chrominance similarity for colour input. Computed on a 0–255 scale.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::ImageTensor;

const NSCALE: usize = 4;
const NORIENT: usize = 4;
const MIN_WAVELENGTH: f64 = 6.0;
const MULT: f64 = 2.0;
const SIGMA_ON_F: f64 = 0.55;
const D_THETA_ON_SIGMA: f64 = 1.2;
const NOISE_K: f64 = 2.0;
const EPSILON: f64 = 1e-4;

const T1: f64 = 0.85;
const T2: f64 = 160.0;
const T3: f64 = 200.0;
const T4: f64 = 200.0;
const LAMBDA: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fsim {
    /// FSIM_c for colour input, FSIM for greyscale.
    pub value: f64,
    /// Whether the chrominance term was included.
    pub chromatic: bool,
}

/// Row-major `rows × cols` plane.
#[derive(Clone, Debug)]
struct Plane {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Plane {
    fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Zero-padded 2-D convolution, central part the size of the input.
    fn conv_same(&self, kernel: &[f64], kr: usize, kc: usize) -> Plane {
        let (or, oc) = ((kr - 1).div_ceil(2), (kc - 1).div_ceil(2));
        Plane::from_fn(self.rows, self.cols, |r, c| {
            let mut acc = 0.0;
            for i in 0..kr {
                for j in 0..kc {
                    let (y, x) = ((r + or) as isize - i as isize, (c + oc) as isize - j as isize);
                    if y >= 0 && x >= 0 && (y as usize) < self.rows && (x as usize) < self.cols {
                        acc += self.at(y as usize, x as usize) * kernel[i * kc + j];
                    }
                }
            }
            acc
        })
    }

    /// Box-filter by `f` and keep every `f`-th sample.
    fn downsample(&self, f: usize) -> Plane {
        if f == 1 {
            return self.clone();
        }
        let avg = self.conv_same(&vec![1.0 / (f * f) as f64; f * f], f, f);
        Plane::from_fn(self.rows.div_ceil(f), self.cols.div_ceil(f), |r, c| avg.at(r * f, c * f))
    }
}

/// Normalized frequency coordinates, zero frequency at index 0.
fn freq_axis(n: usize) -> Vec<f64> {
    let centred: Vec<f64> = if n % 2 == 1 {
        let h = (n - 1) as f64 / 2.0;
        (0..n).map(|i| (i as f64 - h) / (n - 1).max(1) as f64).collect()
    } else {
        (0..n).map(|i| (i as f64 - (n / 2) as f64) / n as f64).collect()
    };
    (0..n).map(|i| centred[(i + n / 2) % n]).collect()
}

struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    row_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Fft2 {
    fn new(rows: usize, cols: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: p.plan_fft_forward(cols),
            row_inv: p.plan_fft_inverse(cols),
            col_fwd: p.plan_fft_forward(rows),
            col_inv: p.plan_fft_inverse(rows),
        }
    }

    fn run(&self, data: &mut [Complex64], inverse: bool) {
        let (rows, cols) = (self.rows, self.cols);
        let (rf, cf) = if inverse { (&self.row_inv, &self.col_inv) } else { (&self.row_fwd, &self.col_fwd) };
        for row in data.chunks_exact_mut(cols) {
            rf.process(row);
        }
        let mut col = vec![Complex64::default(); rows];
        for c in 0..cols {
            for r in 0..rows {
                col[r] = data[r * cols + c];
            }
            cf.process(&mut col);
            for r in 0..rows {
                data[r * cols + c] = col[r];
            }
        }
        if inverse {
            let s = 1.0 / (rows * cols) as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Phase congruency map (sum over orientations of noise-compensated local
/// energy divided by total amplitude).
fn phase_congruency(im: &Plane) -> Plane {
    let (rows, cols) = (im.rows, im.cols);
    let n = rows * cols;
    let fft = Fft2::new(rows, cols);
    let mut spectrum: Vec<Complex64> = im.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.run(&mut spectrum, false);

    let (xs, ys) = (freq_axis(cols), freq_axis(rows));
    let mut radius = vec![0.0; n];
    let mut sin_t = vec![0.0; n];
    let mut cos_t = vec![0.0; n];
    let mut lowpass = vec![0.0; n];
    for r in 0..rows {
        for c in 0..cols {
            let (x, y) = (xs[c], ys[r]);
            let i = r * cols + c;
            let rad = (x * x + y * y).sqrt();
            lowpass[i] = 1.0 / (1.0 + (rad / 0.45).powi(30));
            radius[i] = if i == 0 { 1.0 } else { rad };
            let theta = (-y).atan2(x);
            sin_t[i] = theta.sin();
            cos_t[i] = theta.cos();
        }
    }
    let log_gabor: Vec<Vec<f64>> = (0..NSCALE)
        .map(|s| {
            let fo = 1.0 / (MIN_WAVELENGTH * MULT.powi(s as i32));
            let denom = 2.0 * SIGMA_ON_F.ln().powi(2);
            let mut g: Vec<f64> =
                radius.iter().zip(&lowpass).map(|(&r, &lp)| (-(r / fo).ln().powi(2) / denom).exp() * lp).collect();
            g[0] = 0.0;
            g
        })
        .collect();
    let theta_sigma = PI / NORIENT as f64 / D_THETA_ON_SIGMA;

    let mut energy_all = vec![0.0; n];
    let mut an_all = vec![0.0; n];
    for o in 0..NORIENT {
        let angle = o as f64 * PI / NORIENT as f64;
        let (sa, ca) = angle.sin_cos();
        let spread: Vec<f64> = (0..n)
            .map(|i| {
                let ds = sin_t[i] * ca - cos_t[i] * sa;
                let dc = cos_t[i] * ca + sin_t[i] * sa;
                let dt = ds.atan2(dc).abs();
                (-dt * dt / (2.0 * theta_sigma * theta_sigma)).exp()
            })
            .collect();
        let mut sum_e = vec![0.0; n];
        let mut sum_o = vec![0.0; n];
        let mut sum_an = vec![0.0; n];
        let mut responses = Vec::with_capacity(NSCALE);
        let mut spatial_filters = Vec::with_capacity(NSCALE);
        let mut em_n = 0.0;
        for (s, lg) in log_gabor.iter().enumerate() {
            let filter: Vec<f64> = lg.iter().zip(&spread).map(|(a, b)| a * b).collect();
            let mut sf: Vec<Complex64> = filter.iter().map(|&f| Complex64::new(f, 0.0)).collect();
            fft.run(&mut sf, true);
            let scale = (n as f64).sqrt();
            spatial_filters.push(sf.iter().map(|v| v.re * scale).collect::<Vec<f64>>());
            let mut eo: Vec<Complex64> = spectrum.iter().zip(&filter).map(|(v, f)| v * f).collect();
            fft.run(&mut eo, true);
            for i in 0..n {
                sum_an[i] += eo[i].norm();
                sum_e[i] += eo[i].re;
                sum_o[i] += eo[i].im;
            }
            if s == 0 {
                em_n = filter.iter().map(|f| f * f).sum();
            }
            responses.push(eo);
        }
        let mut energy = vec![0.0; n];
        for i in 0..n {
            let xe = (sum_e[i].powi(2) + sum_o[i].powi(2)).sqrt() + EPSILON;
            let (me, mo) = (sum_e[i] / xe, sum_o[i] / xe);
            for eo in &responses {
                let (e, od) = (eo[i].re, eo[i].im);
                energy[i] += e * me + od * mo - (e * mo - od * me).abs();
            }
        }
        let median_e2n = median(responses[0].iter().map(|v| v.norm_sqr()).collect());
        let mean_e2n = -median_e2n / 0.5f64.ln();
        let noise_power = mean_e2n / em_n;
        let sum_an2: f64 = spatial_filters.iter().flat_map(|f| f.iter().map(|v| v * v)).sum();
        let mut sum_aiaj = 0.0;
        for si in 0..NSCALE {
            for sj in si + 1..NSCALE {
                sum_aiaj += spatial_filters[si].iter().zip(&spatial_filters[sj]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_aiaj;
        let tau = (noise_energy2 / 2.0).sqrt();
        let noise_mean = tau * (PI / 2.0).sqrt();
        let noise_sigma = ((2.0 - PI / 2.0) * tau * tau).sqrt();
        let threshold = (noise_mean + NOISE_K * noise_sigma) / 1.7;
        for i in 0..n {
            energy_all[i] += (energy[i] - threshold).max(0.0);
            an_all[i] += sum_an[i];
        }
    }
    Plane {
        rows,
        cols,
        data: energy_all.iter().zip(&an_all).map(|(&e, &a)| if a > 0.0 { e / a } else { 0.0 }).collect(),
    }
}

fn gradient_magnitude(y: &Plane) -> Plane {
    let dx = [3.0, 0.0, -3.0, 10.0, 0.0, -10.0, 3.0, 0.0, -3.0].map(|v| v / 16.0);
    let dy = [3.0, 10.0, 3.0, 0.0, 0.0, 0.0, -3.0, -10.0, -3.0].map(|v| v / 16.0);
    let gx = y.conv_same(&dx, 3, 3);
    let gy = y.conv_same(&dy, 3, 3);
    Plane { rows: y.rows, cols: y.cols, data: gx.data.iter().zip(&gy.data).map(|(a, b)| a.hypot(*b)).collect() }
}

/// Real part of `p^λ` for possibly negative `p`.
fn real_pow(p: f64, lambda: f64) -> f64 {
    if p >= 0.0 {
        p.powf(lambda)
    } else {
        (-p).powf(lambda) * (lambda * PI).cos()
    }
}

pub fn fsim_c(x: &ImageTensor, y: &ImageTensor) -> Result<Fsim> {
    if x.grid().dims() != y.grid().dims() {
        return Err(Error::Shape(format!("{:?} vs {:?}", x.grid().dims(), y.grid().dims())));
    }
    let (rows, cols, channels) = x.grid().dims();
    if rows < 2 || cols < 2 {
        return Err(Error::Shape("FSIM needs at least 2x2 images".into()));
    }
    let chromatic = channels == 3;
    let planes = |img: &ImageTensor| -> (Plane, Option<(Plane, Plane)>) {
        let g = img.grid();
        let px = |r, c, ch| 255.0 * g.get(r, c, ch);
        if chromatic {
            let yp = Plane::from_fn(rows, cols, |r, c| 0.299 * px(r, c, 0) + 0.587 * px(r, c, 1) + 0.114 * px(r, c, 2));
            let ip = Plane::from_fn(rows, cols, |r, c| 0.596 * px(r, c, 0) - 0.274 * px(r, c, 1) - 0.322 * px(r, c, 2));
            let qp = Plane::from_fn(rows, cols, |r, c| 0.211 * px(r, c, 0) - 0.523 * px(r, c, 1) + 0.312 * px(r, c, 2));
            (yp, Some((ip, qp)))
        } else {
            (Plane::from_fn(rows, cols, |r, c| px(r, c, 0)), None)
        }
    };
    let f = ((rows.min(cols) as f64 / 256.0).round() as usize).max(1);
    let (y1, c1) = planes(x);
    let (y2, c2) = planes(y);
    let (y1, y2) = (y1.downsample(f), y2.downsample(f));
    let pc1 = phase_congruency(&y1);
    let pc2 = phase_congruency(&y2);
    let g1 = gradient_magnitude(&y1);
    let g2 = gradient_magnitude(&y2);
    let chroma = match (c1, c2) {
        (Some((i1, q1)), Some((i2, q2))) => {
            let (i1, q1, i2, q2) = (i1.downsample(f), q1.downsample(f), i2.downsample(f), q2.downsample(f));
            Some(
                (0..i1.data.len())
                    .map(|k| {
                        let si = (2.0 * i1.data[k] * i2.data[k] + T3) / (i1.data[k].powi(2) + i2.data[k].powi(2) + T3);
                        let sq = (2.0 * q1.data[k] * q2.data[k] + T4) / (q1.data[k].powi(2) + q2.data[k].powi(2) + T4);
                        real_pow(si * sq, LAMBDA)
                    })
                    .collect::<Vec<f64>>(),
            )
        }
        _ => None,
    };
    let mut num = 0.0;
    let mut den = 0.0;
    let mut unweighted = 0.0;
    for k in 0..pc1.data.len() {
        let (a, b) = (pc1.data[k], pc2.data[k]);
        let s_pc = (2.0 * a * b + T1) / (a * a + b * b + T1);
        let (ga, gb) = (g1.data[k], g2.data[k]);
        let s_g = (2.0 * ga * gb + T2) / (ga * ga + gb * gb + T2);
        let s_c = chroma.as_ref().map_or(1.0, |c| c[k]);
        let pcm = a.max(b);
        num += s_g * s_pc * s_c * pcm;
        den += pcm;
        unweighted += s_g * s_pc * s_c;
    }
    // Featureless images (no phase congruency anywhere): plain average.
    let value = if den > 0.0 { num / den } else { unweighted / pc1.data.len() as f64 };
    Ok(Fsim { value, chromatic })
}
