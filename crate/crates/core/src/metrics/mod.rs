//! Image quality metrics on `[0, 1]` images.

mod fid;
mod fsim;

pub use fid::{fid, fid_features, gaussian_stats, GaussianStats};
pub use fsim::{fsim_c, Fsim};

use crate::codec::RateReport;
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::grid::ImageTensor;
use crate::losses::{perceptual_loss, FeatureExtractor};

fn same_dims(x: &ImageTensor, y: &ImageTensor) -> Result<()> {
    if x.grid().dims() == y.grid().dims() {
        Ok(())
    } else {
        Err(Error::Shape(format!("{:?} vs {:?}", x.grid().dims(), y.grid().dims())))
    }
}

/// `10 log10(peak² / MSE)`; `+∞` for identical images.
pub fn psnr(x: &ImageTensor, y: &ImageTensor, peak: f64) -> Result<f64> {
    same_dims(x, y)?;
    let mse = x.data().iter().zip(y.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.data().len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (peak * peak / mse).log10() })
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> =
        (0..SSIM_WINDOW).map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of one `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| plane[y * w + x + i] * k[i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| rows[(y + i) * ow + x] * k[i]).sum();
        }
    }
    out
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), averaged over
/// window positions and channels, clamped to `[0, 1]`.
pub fn ssim(x: &ImageTensor, y: &ImageTensor) -> Result<f64> {
    same_dims(x, y)?;
    let (h, w, c) = x.grid().dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Shape(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images, got {h}x{w}")));
    }
    let k = gaussian_window();
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let mut total = 0.0;
    for ch in 0..c {
        let a = x.grid().plane(ch);
        let b = y.grid().plane(ch);
        let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<f64>>();
        let mu_a = filter_valid(&a, h, w, &k);
        let mu_b = filter_valid(&b, h, w, &k);
        let aa = filter_valid(&prod(&a, &a), h, w, &k);
        let bb = filter_valid(&prod(&b, &b), h, w, &k);
        let ab = filter_valid(&prod(&a, &b), h, w, &k);
        let map_mean = (0..mu_a.len())
            .map(|i| {
                let (ma, mb) = (mu_a[i], mu_b[i]);
                let (va, vb, cov) = (aa[i] - ma * ma, bb[i] - mb * mb, ab[i] - ma * mb);
                ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
            })
            .sum::<f64>()
            / mu_a.len() as f64;
        total += map_mean;
    }
    Ok((total / c as f64).clamp(0.0, 1.0))
}

/// Column order of the results table.
pub const TABLE_COLUMNS: [&str; 5] = ["SSIM", "PSNR", "FSIM_c", "PLoss", "FID"];

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub psnr: f64,
    pub ssim: f64,
    pub fsim_c: f64,
    pub perceptual: f64,
    pub fid: f64,
    pub rate: Option<RateReport>,
    /// Number of image pairs averaged.
    pub pairs: usize,
}

impl MetricsReport {
    pub fn table_header() -> String {
        TABLE_COLUMNS.join("\t")
    }

    pub fn table_row(&self) -> String {
        format!("{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.2}", self.ssim, self.psnr, self.fsim_c, self.perceptual, self.fid)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("pairs", &self.pairs.to_string());
        kv.set("ssim", &self.ssim.to_string());
        kv.set("psnr", &self.psnr.to_string());
        kv.set("fsim_c", &self.fsim_c.to_string());
        kv.set("perceptual", &self.perceptual.to_string());
        kv.set("fid", &self.fid.to_string());
        if let Some(r) = &self.rate {
            kv.set("theoretical_bpp", &r.theoretical_bpp.to_string());
            kv.set("container_bpp", &r.container_bpp.to_string());
            kv.set("side_channel_bpp", &r.side_channel_bpp.to_string());
        }
        kv
    }
}

/// Average per-pair metrics over aligned reference/test lists; FID between
/// the two sets.
pub fn evaluate_pairs(
    refs: &[ImageTensor],
    tests: &[ImageTensor],
    fe: &FeatureExtractor,
    rate: Option<RateReport>,
) -> Result<MetricsReport> {
    if refs.len() != tests.len() {
        return Err(Error::Shape(format!("{} reference vs {} test images", refs.len(), tests.len())));
    }
    if refs.is_empty() {
        return Err(Error::Shape("no images to evaluate".into()));
    }
    let n = refs.len() as f64;
    let (mut p, mut s, mut f, mut pl) = (0.0, 0.0, 0.0, 0.0);
    for (r, t) in refs.iter().zip(tests) {
        p += psnr(r, t, 1.0)?;
        s += ssim(r, t)?;
        f += fsim_c(r, t)?.value;
        pl += perceptual_loss(r, t, fe)?;
    }
    let fid_value = if refs.len() >= 2 {
        let a = gaussian_stats(&fid_features(refs, fe)?)?;
        let b = gaussian_stats(&fid_features(tests, fe)?)?;
        fid(&a, &b)?
    } else {
        f64::NAN
    };
    Ok(MetricsReport {
        psnr: p / n,
        ssim: s / n,
        fsim_c: f / n,
        perceptual: pl / n,
        fid: fid_value,
        rate,
        pairs: refs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(seed: u64) -> ImageTensor {
        ImageTensor::from_fn(32, 32, |y, x, c| {
            let v = ((y * 31 + x * 17 + c * 7) as u64 * 2654435761 + seed) % 1000;
            v as f64 / 999.0
        })
    }

    #[test]
    fn identical_images() {
        let a = img(1);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let f = fsim_c(&a, &a).unwrap();
        assert!((f.value - 1.0).abs() < 1e-12 && f.chromatic);
    }

    #[test]
    fn psnr_constant_offset() {
        let a = ImageTensor::from_fn(16, 16, |y, x, _| 0.5 * ((y + x) % 2) as f64);
        let b = ImageTensor::from_fn(16, 16, |y, x, _| 0.5 * ((y + x) % 2) as f64 + 16.0 / 255.0);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0 * (255.0f64 / 16.0).log10()).abs() < 1e-9);
    }

    #[test]
    fn ssim_needs_window() {
        let a = ImageTensor::from_fn(8, 8, |_, _, _| 0.5);
        assert!(matches!(ssim(&a, &a), Err(Error::Shape(_))));
    }

    #[test]
    fn stats_two_points() {
        let s = gaussian_stats(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(s.mean.as_slice(), &[1.0, 1.0]);
        assert_eq!(s.cov.as_slice(), &[2.0, 2.0, 2.0, 2.0]);
        assert!(gaussian_stats(&[vec![1.0]]).is_err());
    }

    #[test]
    fn fid_scalar_cases() {
        let g = |m: f64, v: f64| GaussianStats {
            mean: nalgebra::DVector::from_element(1, m),
            cov: nalgebra::DMatrix::from_element(1, 1, v),
            n: 10,
        };
        assert_eq!(fid(&g(0.0, 1.0), &g(0.0, 1.0)).unwrap(), 0.0);
        assert!((fid(&g(0.0, 1.0), &g(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!((fid(&g(0.0, 1.0), &g(0.0, 4.0)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_row_has_five_columns() {
        let r =
            MetricsReport { psnr: 18.5, ssim: 0.51, fsim_c: 0.8, perceptual: 1.2, fid: 74.06, rate: None, pairs: 1 };
        assert_eq!(MetricsReport::table_header(), "SSIM\tPSNR\tFSIM_c\tPLoss\tFID");
        assert_eq!(r.table_row().split('\t').count(), 5);
    }
}
