//! Training objectives. Plain functions evaluate losses on values; the
//! `tape_*` functions record the same quantities for backpropagation.

mod features;

pub use features::FeatureExtractor;

use autograd::{Tape, Var};
use log::warn;

use crate::error::{Error, Result};
use crate::grid::{Grid, ImageTensor};

/// Clamp applied to discriminator outputs before taking logs.
pub const GAN_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_mse: f64,
    pub lambda_p: f64,
    pub lambda_s: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_mse: 1.0, lambda_p: 5.0, lambda_s: 1.0 }
    }
}

impl LossWeights {
    pub fn new(lambda_mse: f64, lambda_p: f64, lambda_s: f64) -> Result<Self> {
        let w = Self { lambda_mse, lambda_p, lambda_s };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_mse", self.lambda_mse), ("lambda_p", self.lambda_p), ("lambda_s", self.lambda_s)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

fn clamp_prob(v: f64) -> f64 {
    if !(-GAN_EPS..=1.0 + GAN_EPS).contains(&v) {
        warn!("discriminator output {v} outside (0, 1)");
    }
    v.clamp(GAN_EPS, 1.0 - GAN_EPS)
}

/// `(d_loss, g_loss)` with `d_loss = −mean[ln D_real + ln(1 − D_fake)]` and
/// the non-saturating `g_loss = −mean[ln D_fake]`.
pub fn gan_losses(d_real: &[f64], d_fake: &[f64]) -> Result<(f64, f64)> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Shape("empty discriminator output".into()));
    }
    let mean = |xs: &[f64], f: &dyn Fn(f64) -> f64| xs.iter().map(|&v| f(clamp_prob(v))).sum::<f64>() / xs.len() as f64;
    let d = -(mean(d_real, &|v| v.ln()) + mean(d_fake, &|v| (1.0 - v).ln()));
    let g = -mean(d_fake, &|v| v.ln());
    Ok((d, g))
}

fn check_same<T: Copy, U: Copy>(a: &Grid<T>, b: &Grid<U>) -> Result<()> {
    if a.same_dims(b) {
        Ok(())
    } else {
        Err(Error::Shape(format!("{:?} vs {:?}", a.dims(), b.dims())))
    }
}

pub fn mse_loss(x: &Grid<f64>, y: &Grid<f64>) -> Result<f64> {
    check_same(x, y)?;
    if x.is_empty() {
        return Err(Error::Shape("empty grids".into()));
    }
    Ok(x.data().iter().zip(y.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64)
}

/// Mean squared distance between extractor responses.
pub fn perceptual_loss(x: &ImageTensor, y: &ImageTensor, fe: &FeatureExtractor) -> Result<f64> {
    check_same(x.grid(), y.grid())?;
    let fx = fe.extract(&x.to_nchw())?;
    let fy = fe.extract(&y.to_nchw())?;
    Ok(fx.data().iter().zip(fy.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / fx.len() as f64)
}

/// Sum over levels of the mean squared difference of mirrored features.
pub fn sae_layer_loss(enc: &[Grid<f64>], dec: &[Grid<f64>]) -> Result<f64> {
    if enc.len() != dec.len() {
        return Err(Error::Shape(format!("{} encoder levels vs {} decoder levels", enc.len(), dec.len())));
    }
    enc.iter().zip(dec).map(|(e, d)| mse_loss(e, d)).sum()
}

/// Generator-side loss components of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub g_loss: f64,
    pub mse: f64,
    pub perceptual: f64,
    pub sae: f64,
    /// SPN regression loss; zero for other variants.
    pub spn_aux: f64,
}

impl LossParts {
    pub fn check_finite(&self) -> Result<()> {
        for (component, v) in [
            ("g_loss", self.g_loss),
            ("mse", self.mse),
            ("perceptual", self.perceptual),
            ("sae", self.sae),
            ("spn_aux", self.spn_aux),
        ] {
            if !v.is_finite() {
                return Err(Error::TrainingAbort { component: component.into() });
            }
        }
        Ok(())
    }
}

pub fn total_loss(parts: &LossParts, w: &LossWeights) -> Result<f64> {
    parts.check_finite()?;
    Ok(parts.g_loss + w.lambda_mse * parts.mse + w.lambda_p * parts.perceptual + w.lambda_s * parts.sae + parts.spn_aux)
}

/// Recorded `d_loss`.
pub fn tape_d_loss(tape: &mut Tape, d_real: Var, d_fake: Var) -> Var {
    let lr = tape.ln_clamped(d_real, GAN_EPS, 1.0 - GAN_EPS);
    let lr = tape.mean(lr);
    let inv = tape.affine(d_fake, -1.0, 1.0);
    let lf = tape.ln_clamped(inv, GAN_EPS, 1.0 - GAN_EPS);
    let lf = tape.mean(lf);
    let s = tape.add(lr, lf);
    tape.scale(s, -1.0)
}

/// Recorded non-saturating `g_loss`.
pub fn tape_g_loss(tape: &mut Tape, d_fake: Var) -> Var {
    let l = tape.ln_clamped(d_fake, GAN_EPS, 1.0 - GAN_EPS);
    let l = tape.mean(l);
    tape.scale(l, -1.0)
}

/// Recorded perceptual loss between a target batch and a reconstruction.
pub fn tape_perceptual(tape: &mut Tape, fe: &FeatureExtractor, target: Var, recon: Var) -> Result<Var> {
    let ft = fe.forward(tape, target)?;
    let ft = tape.detach(ft);
    let fr = fe.forward(tape, recon)?;
    Ok(tape.mse(fr, ft))
}

/// Recorded layer-wise loss over `(encoder, decoder)` feature pairs.
pub fn tape_sae(tape: &mut Tape, pairs: &[(Var, Var)]) -> Result<Option<Var>> {
    let mut total: Option<Var> = None;
    for &(e, d) in pairs {
        if tape.value(e).shape() != tape.value(d).shape() {
            return Err(Error::Shape(format!(
                "mirrored features {:?} vs {:?}",
                tape.value(e).shape(),
                tape.value(d).shape()
            )));
        }
        let l = tape.mse(e, d);
        total = Some(match total {
            Some(t) => tape.add(t, l),
            None => l,
        });
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn gan_plug_in_values() {
        let (d, g) = gan_losses(&[0.5; 4], &[0.5; 4]).unwrap();
        assert!((d - 2.0 * LN2).abs() < 1e-12);
        assert!((g - LN2).abs() < 1e-12);
        let (d, _) = gan_losses(&[1.0 - GAN_EPS], &[GAN_EPS]).unwrap();
        assert!(d.abs() < 1e-6);
    }

    #[test]
    fn mse_examples() {
        let x = Grid::from_fn(3, 4, 3, |y, x, c| (y * 12 + x * 3 + c) as f64 / 40.0);
        assert_eq!(mse_loss(&x, &x).unwrap(), 0.0);
        assert!((mse_loss(&x, &x.map(|v| v + 0.1)).unwrap() - 0.01).abs() < 1e-12);
        assert!(mse_loss(&x, &Grid::filled(3, 4, 1, 0.0)).is_err());
    }

    #[test]
    fn sae_examples() {
        let a = Grid::filled(2, 2, 3, 1.0);
        let b = Grid::filled(2, 2, 3, 3.0);
        assert_eq!(sae_layer_loss(std::slice::from_ref(&a), std::slice::from_ref(&a)).unwrap(), 0.0);
        assert_eq!(sae_layer_loss(std::slice::from_ref(&a), std::slice::from_ref(&b)).unwrap(), 4.0);
        assert!(sae_layer_loss(std::slice::from_ref(&a), &[]).is_err());
    }

    #[test]
    fn total_examples() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&LossParts::default(), &w).unwrap(), 0.0);
        let ones = LossParts { g_loss: 1.0, mse: 1.0, perceptual: 1.0, sae: 1.0, spn_aux: 0.0 };
        assert_eq!(total_loss(&ones, &w).unwrap(), 8.0);
        let zero = LossWeights::new(0.0, 0.0, 0.0).unwrap();
        assert_eq!(total_loss(&ones, &zero).unwrap(), 1.0);
        let bad = LossParts { perceptual: f64::NAN, ..ones };
        match total_loss(&bad, &w) {
            Err(Error::TrainingAbort { component }) => assert_eq!(component, "perceptual"),
            other => panic!("{other:?}"),
        }
        assert!(LossWeights::new(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn tape_gan_matches_values() {
        let mut tape = Tape::new();
        let r = tape.leaf(autograd::Tensor::from_vec(&[1, 1, 2, 2], vec![0.9, 0.7, 0.6, 0.99]));
        let f = tape.leaf(autograd::Tensor::from_vec(&[1, 1, 2, 2], vec![0.1, 0.3, 0.45, 0.05]));
        let d = tape_d_loss(&mut tape, r, f);
        let g = tape_g_loss(&mut tape, f);
        let (dv, gv) = gan_losses(tape.value(r).data(), tape.value(f).data()).unwrap();
        assert!((tape.value(d).item() - dv).abs() < 1e-12);
        assert!((tape.value(g).item() - gv).abs() < 1e-12);
    }
}
