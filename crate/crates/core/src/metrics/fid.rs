//! Fréchet distance between Gaussians fitted to feature sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::ImageTensor;
use crate::losses::FeatureExtractor;

/// Eigenvalues above this (relative to the spectrum's scale) but below zero
/// are treated as round-off and clipped.
const NEGATIVE_EIGEN_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased covariance of the rows of `features`.
pub fn gaussian_stats(features: &[Vec<f64>]) -> Result<GaussianStats> {
    let n = features.len();
    if n < 2 {
        return Err(Error::Shape(format!("need at least 2 samples, got {n}")));
    }
    let d = features[0].len();
    if d == 0 || features.iter().any(|f| f.len() != d) {
        return Err(Error::Shape("feature rows must share a positive dimension".into()));
    }
    let x = DMatrix::from_fn(n, d, |i, j| features[i][j]);
    let mean = DVector::from_fn(d, |j, _| x.column(j).sum() / n as f64);
    let centred = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (n - 1) as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianStats { mean, cov, n })
}

fn clipped_eigenvalues(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.amax().max(1.0);
    if let Some(&worst) = eig.eigenvalues.iter().find(|&&v| v < -NEGATIVE_EIGEN_TOLERANCE * scale) {
        return Err(Error::Numeric(format!("matrix square root failed: eigenvalue {worst}")));
    }
    Ok(eig.eigenvalues.map(|v| v.max(0.0)))
}

/// Symmetric PSD square root.
fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let values = clipped_eigenvalues(&sym)?;
    let eig = SymmetricEigen::new(sym);
    let d = DMatrix::from_diagonal(&values.map(f64::sqrt));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// `‖μa − μb‖² + tr(Σa + Σb − 2 (Σa Σb)^{1/2})`, with the trace of the
/// square root taken as `tr (Σa^{1/2} Σb Σa^{1/2})^{1/2}`.
pub fn fid(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("feature dimensions {} and {} differ", a.dim(), b.dim())));
    }
    let diff = (&a.mean - &b.mean).norm_squared();
    let sa = sqrt_psd(&a.cov)?;
    let inner = &sa * &b.cov * &sa;
    let inner = (&inner + inner.transpose()) * 0.5;
    let tr_sqrt: f64 = clipped_eigenvalues(&inner)?.iter().map(|v| v.sqrt()).sum();
    let tr = a.cov.trace() + b.cov.trace();
    let value = diff + tr - 2.0 * tr_sqrt;
    // Cancellation noise around zero.
    if value < 1e-12 * (1.0 + tr + diff) {
        return Ok(0.0);
    }
    Ok(value)
}

/// Pooled extractor features, one row per image.
pub fn fid_features(images: &[ImageTensor], fe: &FeatureExtractor) -> Result<Vec<Vec<f64>>> {
    if images.len() < 2 {
        return Err(Error::Shape(format!("FID needs at least 2 images, got {}", images.len())));
    }
    images.iter().map(|img| Ok(fe.pooled(&img.to_nchw())?.remove(0))).collect()
}
