//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;

/// Row-major complex plane.
#[derive(Clone)]
struct Plane {
    rows: usize,
    cols: usize,
    v: Vec<Complex64>,
}

impl Plane {
    fn real(rows: usize, cols: usize, data: &[f64]) -> Self {
        Self { rows, cols, v: data.iter().map(|&x| Complex64::new(x, 0.0)).collect() }
    }

    fn at(&self, r: usize, c: usize) -> Complex64 {
        self.v[r * self.cols + c]
    }
}

/// Direct (quadratic-time) separable DFT; `sign` -1 forward, +1 inverse
/// (the inverse also divides by the element count).
fn dft2(p: &Plane, sign: f64) -> Plane {
    let (m, n) = (p.rows, p.cols);
    let twiddle = |len: usize, k: usize, j: usize| {
        let a = sign * 2.0 * PI * ((k * j) % len) as f64 / len as f64;
        Complex64::new(a.cos(), a.sin())
    };
    let mut tmp = vec![Complex64::new(0.0, 0.0); m * n];
    for r in 0..m {
        for k in 0..n {
            tmp[r * n + k] = (0..n).map(|j| p.at(r, j) * twiddle(n, k, j)).sum();
        }
    }
    let mut out = vec![Complex64::new(0.0, 0.0); m * n];
    for k in 0..m {
        for c in 0..n {
            out[k * n + c] = (0..m).map(|j| tmp[j * n + c] * twiddle(m, k, j)).sum();
        }
    }
    if sign > 0.0 {
        let s = 1.0 / (m * n) as f64;
        out.iter_mut().for_each(|z| *z *= s);
    }
    Plane { rows: m, cols: n, v: out }
}

/// Normalized frequency of DFT bin `k` along an axis of length `len`, laid
/// out as MATLAB's `ifftshift` of the centred range.
fn freq(k: usize, len: usize) -> f64 {
    let centred: Vec<f64> = if len % 2 == 1 {
        let h = (len - 1) as f64 / 2.0;
        (0..len).map(|i| (i as f64 - h) / (len - 1) as f64).collect()
    } else {
        (0..len).map(|i| (i as f64 - (len / 2) as f64) / len as f64).collect()
    };
    // ifftshift moves element floor(len/2) of the centred range to index 0.
    centred[(k + len / 2) % len]
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Phase congruency of a grey plane (values on a 0–255 scale).
fn phase_congruency(img: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let (nscale, norient) = (4usize, 4usize);
    let (min_wavelength, mult, sigma_on_f, d_theta_on_sigma, k, eps) = (6.0, 2.0f64, 0.55f64, 1.2, 2.0, 1e-4);
    let theta_sigma = PI / norient as f64 / d_theta_on_sigma;
    let spectrum = dft2(&Plane::real(rows, cols, img), -1.0);
    let count = rows * cols;

    let mut radius = vec![0.0; count];
    let mut theta = vec![0.0; count];
    let mut lowpass = vec![0.0; count];
    for r in 0..rows {
        for c in 0..cols {
            let (fx, fy) = (freq(c, cols), freq(r, rows));
            let rad = (fx * fx + fy * fy).sqrt();
            lowpass[r * cols + c] = 1.0 / (1.0 + (rad / 0.45).powi(30));
            radius[r * cols + c] = rad;
            theta[r * cols + c] = (-fy).atan2(fx);
        }
    }
    radius[0] = 1.0;

    let log_gabor: Vec<Vec<f64>> = (0..nscale)
        .map(|s| {
            let fo = 1.0 / (min_wavelength * mult.powi(s as i32));
            let mut g: Vec<f64> = (0..count)
                .map(|i| (-((radius[i] / fo).ln().powi(2)) / (2.0 * sigma_on_f.ln().powi(2))).exp() * lowpass[i])
                .collect();
            g[0] = 0.0;
            g
        })
        .collect();

    let mut energy_all = vec![0.0; count];
    let mut an_all = vec![0.0; count];
    for o in 0..norient {
        let angle = o as f64 * PI / norient as f64;
        let spread: Vec<f64> = (0..count)
            .map(|i| {
                let ds = theta[i].sin() * angle.cos() - theta[i].cos() * angle.sin();
                let dc = theta[i].cos() * angle.cos() + theta[i].sin() * angle.sin();
                let d = ds.atan2(dc).abs();
                (-d * d / (2.0 * theta_sigma * theta_sigma)).exp()
            })
            .collect();
        let mut responses = Vec::new();
        let mut spatial_filters = Vec::new();
        let mut em_n = 0.0;
        for (s, lg) in log_gabor.iter().enumerate() {
            let filter: Vec<f64> = lg.iter().zip(&spread).map(|(a, b)| a * b).collect();
            if s == 0 {
                em_n = filter.iter().map(|f| f * f).sum();
            }
            let spatial = dft2(&Plane::real(rows, cols, &filter), 1.0);
            spatial_filters.push(spatial.v.iter().map(|z| z.re * (count as f64).sqrt()).collect::<Vec<f64>>());
            let product = Plane { rows, cols, v: spectrum.v.iter().zip(&filter).map(|(z, f)| z * f).collect() };
            responses.push(dft2(&product, 1.0).v);
        }
        let mut sum_e = vec![0.0; count];
        let mut sum_o = vec![0.0; count];
        let mut sum_an = vec![0.0; count];
        for resp in &responses {
            for i in 0..count {
                sum_e[i] += resp[i].re;
                sum_o[i] += resp[i].im;
                sum_an[i] += resp[i].norm();
            }
        }
        let mut energy = vec![0.0; count];
        for i in 0..count {
            let x = (sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]).sqrt() + eps;
            let (me, mo) = (sum_e[i] / x, sum_o[i] / x);
            for resp in &responses {
                let (e, od) = (resp[i].re, resp[i].im);
                energy[i] += e * me + od * mo - (e * mo - od * me).abs();
            }
        }
        let med = median(responses[0].iter().map(|z| z.norm_sqr()).collect());
        let noise_power = (-med / 0.5f64.ln()) / em_n;
        let sum_an2: f64 = spatial_filters.iter().flat_map(|f| f.iter().map(|v| v * v)).sum();
        let mut sum_aiaj = 0.0;
        for a in 0..nscale {
            for b in a + 1..nscale {
                sum_aiaj += spatial_filters[a].iter().zip(&spatial_filters[b]).map(|(x, y)| x * y).sum::<f64>();
            }
        }
        let noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_aiaj;
        let tau = (noise_energy2 / 2.0).sqrt();
        let mean_noise = tau * (PI / 2.0).sqrt();
        let sigma_noise = ((2.0 - PI / 2.0) * tau * tau).sqrt();
        let t = (mean_noise + k * sigma_noise) / 1.7;
        for i in 0..count {
            energy_all[i] += (energy[i] - t).max(0.0);
            an_all[i] += sum_an[i];
        }
    }
    energy_all.iter().zip(&an_all).map(|(e, a)| e / a).collect()
}

/// MATLAB `conv2(img, kernel, 'same')` for a 3×3 kernel.
fn conv2_same3(img: &[f64], rows: usize, cols: usize, k: &[[f64; 3]; 3]) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (i, krow) in k.iter().enumerate() {
                for (j, kv) in krow.iter().enumerate() {
                    // Full convolution index (r + 1, c + 1) minus kernel offset.
                    let (y, x) = (r as isize + 1 - i as isize, c as isize + 1 - j as isize);
                    if y >= 0 && x >= 0 && (y as usize) < rows && (x as usize) < cols {
                        acc += kv * img[y as usize * cols + x as usize];
                    }
                }
            }
            out[r * cols + c] = acc;
        }
    }
    out
}

/// Colour FSIM of two `rows × cols` RGB images given as interleaved `[0, 1]`
/// samples. Only valid when no downsampling applies (min side < 384).
pub fn fsim_c_reference(a: &[f64], b: &[f64], rows: usize, cols: usize) -> f64 {
    assert!(rows.min(cols) < 384, "reference skips the downsampling step");
    let split = |px: &[f64]| {
        let mut y = Vec::new();
        let mut i = Vec::new();
        let mut q = Vec::new();
        for p in px.chunks_exact(3) {
            let (r, g, bl) = (p[0] * 255.0, p[1] * 255.0, p[2] * 255.0);
            y.push(0.299 * r + 0.587 * g + 0.114 * bl);
            i.push(0.596 * r - 0.274 * g - 0.322 * bl);
            q.push(0.211 * r - 0.523 * g + 0.312 * bl);
        }
        (y, i, q)
    };
    let (y1, i1, q1) = split(a);
    let (y2, i2, q2) = split(b);
    let pc1 = phase_congruency(&y1, rows, cols);
    let pc2 = phase_congruency(&y2, rows, cols);
    let dx = [[3.0 / 16.0, 0.0, -3.0 / 16.0], [10.0 / 16.0, 0.0, -10.0 / 16.0], [3.0 / 16.0, 0.0, -3.0 / 16.0]];
    let dy = [[3.0 / 16.0, 10.0 / 16.0, 3.0 / 16.0], [0.0; 3], [-3.0 / 16.0, -10.0 / 16.0, -3.0 / 16.0]];
    let grad = |y: &[f64]| {
        let gx = conv2_same3(y, rows, cols, &dx);
        let gy = conv2_same3(y, rows, cols, &dy);
        gx.iter().zip(&gy).map(|(u, v)| (u * u + v * v).sqrt()).collect::<Vec<f64>>()
    };
    let (g1, g2) = (grad(&y1), grad(&y2));
    let (t1, t2, t3, t4, lambda) = (0.85, 160.0, 200.0, 200.0, 0.03);
    let mut num = 0.0;
    let mut den = 0.0;
    for n in 0..rows * cols {
        let pc_sim = (2.0 * pc1[n] * pc2[n] + t1) / (pc1[n] * pc1[n] + pc2[n] * pc2[n] + t1);
        let g_sim = (2.0 * g1[n] * g2[n] + t2) / (g1[n] * g1[n] + g2[n] * g2[n] + t2);
        let i_sim = (2.0 * i1[n] * i2[n] + t3) / (i1[n] * i1[n] + i2[n] * i2[n] + t3);
        let q_sim = (2.0 * q1[n] * q2[n] + t4) / (q1[n] * q1[n] + q2[n] * q2[n] + t4);
        // Real part of a possibly complex power, as MATLAB's real(x .^ λ).
        let iq = Complex64::new(i_sim * q_sim, 0.0).powf(lambda).re;
        let pcm = pc1[n].max(pc2[n]);
        num += g_sim * pc_sim * iq * pcm;
        den += pcm;
    }
    num / den
}

/// `‖μa − μb‖² + tr Σa + tr Σb − 2 tr √(Σa Σb)`, with the square root of the
/// (non-symmetric) product from a Denman–Beavers iteration.
pub fn fid_reference(mu_a: &[f64], cov_a: &DMatrix<f64>, mu_b: &[f64], cov_b: &DMatrix<f64>) -> f64 {
    let n = mu_a.len();
    let product = cov_a * cov_b;
    let mut y = product.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let y_inv = y.clone().try_inverse().expect("invertible iterate");
        let z_inv = z.clone().try_inverse().expect("invertible iterate");
        let y_next = (&y + z_inv) * 0.5;
        let z_next = (&z + y_inv) * 0.5;
        let delta = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if delta < 1e-14 * y.norm() {
            break;
        }
    }
    let diff: f64 = mu_a.iter().zip(mu_b).map(|(a, b)| (a - b).powi(2)).sum();
    diff + cov_a.trace() + cov_b.trace() - 2.0 * y.trace()
}

/// The same distance with `tr √(Σa Σb) = tr √(Σb^½ Σa Σb^½)`, both roots from
/// symmetric eigendecompositions.
pub fn fid_eigen_reference(mu_a: &[f64], cov_a: &DMatrix<f64>, mu_b: &[f64], cov_b: &DMatrix<f64>) -> f64 {
    let sym_sqrt = |m: DMatrix<f64>| {
        let e = m.symmetric_eigen();
        let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
        &e.eigenvectors * d * e.eigenvectors.transpose()
    };
    let root_b = sym_sqrt(cov_b.clone());
    let inner = &root_b * cov_a * &root_b;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = inner.symmetric_eigen().eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    let diff: f64 = mu_a.iter().zip(mu_b).map(|(a, b)| (a - b).powi(2)).sum();
    diff + cov_a.trace() + cov_b.trace() - 2.0 * cross
}
