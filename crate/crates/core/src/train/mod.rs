//! Alternating adversarial training with learning-rate decay, per-epoch
//! history and checkpoints.

mod checkpoint;
mod config;
mod history;

pub use checkpoint::{load_model, Checkpoint};
pub use config::{known_keys, PerceptualSource, TrainConfig};
pub use history::{HistoryRow, HISTORY_COLUMNS};

use std::path::PathBuf;
use std::rc::Rc;

use autograd::{Adam, Bound, Sgd, Tape, Tensor, Var};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::archspec::SwitchSource;
use crate::config::Variant;
use crate::data::PatchDataset;
use crate::error::{Error, Result};
use crate::grid::ImageTensor;
use crate::losses::{tape_d_loss, tape_g_loss, tape_perceptual, tape_sae, FeatureExtractor, LossParts};
use crate::metrics::{fid, fid_features, gaussian_stats, psnr};
use crate::model::CompressNet;
use crate::quantizer::quantize_ste;
use crate::switches::midpoint_targets;

/// Seed of the test-profile perceptual extractor.
pub const EXTRACTOR_SEED: u64 = 0x5EED_F00D;

/// Gradient norm above which a step logs a warning.
pub const EXPLODING_GRADIENT_NORM: f64 = 1e4;

/// Environment variable naming the directory searched for extractor weights.
pub const CACHE_ENV: &str = "COMPRESSNET_CACHE";

/// `base · decay^⌊epoch / interval⌋`, with 0-based epochs.
pub fn lr_at(base: f64, decay: f64, interval: usize, epoch: usize) -> f64 {
    base * decay.powi((epoch / interval.max(1)) as i32)
}

/// Build the perceptual extractor a config asks for. Relative weight paths
/// that do not exist are looked up under `$COMPRESSNET_CACHE`.
pub fn load_extractor(source: &PerceptualSource) -> Result<FeatureExtractor> {
    match source {
        PerceptualSource::TestProfile => Ok(FeatureExtractor::test_profile(EXTRACTOR_SEED)),
        PerceptualSource::Weights { path, sha256 } => {
            let mut resolved = path.clone();
            if !resolved.exists() && resolved.is_relative() {
                if let Some(cache) = std::env::var_os(CACHE_ENV) {
                    resolved = PathBuf::from(cache).join(path);
                }
            }
            FeatureExtractor::alexnet_conv4(resolved, sha256)
        }
    }
}

/// Losses and diagnostics of one training step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    pub d_loss: f64,
    pub parts: LossParts,
    /// Weighted generator objective that was minimized.
    pub total: f64,
    /// Fraction of first-level switches the SPN predicted correctly.
    pub switch_accuracy: Option<f64>,
    /// Gradient norm of the encoder's first convolution weight.
    pub encoder_grad_norm: f64,
    /// Gradient norm over all encoder, decoder and SPN parameters.
    pub grad_norm: f64,
}

/// Reconstruction quality in inference mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionReport {
    /// Mean squared pixel error.
    pub mse: f64,
    /// Mean squared error between mirrored encoder and decoder features,
    /// finest level first. Empty for `plain`.
    pub level_errors: Vec<f64>,
}

/// Networks, optimizers and history of a training run.
#[derive(Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    model: CompressNet,
    opt_encoder: Adam,
    opt_decoder: Adam,
    opt_spn: Option<Adam>,
    opt_disc: Sgd,
    extractor: FeatureExtractor,
    epoch: usize,
    history: Vec<HistoryRow>,
}

fn grad_norm(groups: &[&[Tensor]]) -> f64 {
    groups.iter().flat_map(|g| g.iter()).map(|t| t.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
}

fn weighted(tape: &mut Tape, acc: Option<Var>, term: Var, weight: f64) -> Option<Var> {
    if weight == 0.0 {
        return acc;
    }
    let t = if weight == 1.0 { term } else { tape.scale(term, weight) };
    Some(match acc {
        Some(a) => tape.add(a, t),
        None => t,
    })
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        let extractor = load_extractor(&cfg.perceptual)?;
        Self::with_extractor(cfg, extractor)
    }

    pub fn with_extractor(cfg: TrainConfig, extractor: FeatureExtractor) -> Result<Self> {
        cfg.validate()?;
        let model = CompressNet::new(cfg.model.clone())?;
        let opt_encoder = Adam::new(model.encoder.params(), cfg.lr_eg);
        let opt_decoder = Adam::new(model.decoder.params(), cfg.lr_eg);
        let opt_spn = model.spn.as_ref().map(|s| Adam::new(s.params(), cfg.lr_eg));
        let opt_disc = Sgd::new(cfg.lr_d);
        Ok(Self { cfg, model, opt_encoder, opt_decoder, opt_spn, opt_disc, extractor, epoch: 0, history: Vec::new() })
    }

    /// Resume from a checkpoint.
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let extractor = load_extractor(&ckpt.config.perceptual)?;
        Self::from_checkpoint_with_extractor(ckpt, extractor)
    }

    pub fn from_checkpoint_with_extractor(ckpt: Checkpoint, extractor: FeatureExtractor) -> Result<Self> {
        let model = ckpt.model()?;
        let Checkpoint { config, epoch, history, mut adam, sgd_lr, .. } = ckpt;
        let expected = 2 + usize::from(model.spn.is_some());
        if adam.len() != expected {
            return Err(Error::Corruption(format!("{} optimizer states, expected {expected}", adam.len())));
        }
        let opt_spn = if model.spn.is_some() { adam.pop() } else { None };
        let opt_decoder = adam.pop().expect("length checked");
        let opt_encoder = adam.pop().expect("length checked");
        Ok(Self {
            cfg: config,
            model,
            opt_encoder,
            opt_decoder,
            opt_spn,
            opt_disc: Sgd::new(sgd_lr),
            extractor,
            epoch,
            history,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut adam = vec![self.opt_encoder.clone(), self.opt_decoder.clone()];
        adam.extend(self.opt_spn.clone());
        Checkpoint {
            config: self.cfg.clone(),
            epoch: self.epoch,
            history: self.history.clone(),
            params: self.model.export_params(),
            adam,
            sgd_lr: self.opt_disc.lr,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &CompressNet {
        &self.model
    }

    pub fn into_model(self) -> CompressNet {
        self.model
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn history(&self) -> &[HistoryRow] {
        &self.history
    }

    /// Current `(generator, discriminator)` learning rates.
    pub fn learning_rates(&self) -> (f64, f64) {
        (self.opt_encoder.lr, self.opt_disc.lr)
    }

    fn set_epoch_lr(&mut self, epoch: usize) {
        let c = &self.cfg;
        let lr_g = lr_at(c.lr_eg, c.lr_decay, c.decay_interval, epoch);
        self.opt_encoder.lr = lr_g;
        self.opt_decoder.lr = lr_g;
        if let Some(o) = &mut self.opt_spn {
            o.lr = lr_g;
        }
        self.opt_disc.lr = lr_at(c.lr_d, c.lr_decay, c.decay_interval, epoch);
    }

    fn switch_source(&self, recorded: Option<&Rc<Vec<u8>>>) -> Option<SwitchSource> {
        match self.model.variant() {
            Variant::Swwae => recorded.map(|s| SwitchSource::Given(Rc::clone(s))),
            Variant::SaeSpn => Some(SwitchSource::Predicted),
            Variant::Plain | Variant::SaeAll => None,
        }
    }

    /// Training-mode reconstruction of a batch (switch sources as in
    /// [`Trainer::train_step`], straight-through quantization).
    pub fn generate(&self, batch: &[ImageTensor]) -> Result<Tensor> {
        let x = Tensor::stack(&batch.iter().map(ImageTensor::to_nchw).collect::<Vec<_>>());
        let mut tape = Tape::new();
        let pe = self.model.encoder.params().bind(&mut tape, false);
        let pd = self.model.decoder.params().bind(&mut tape, false);
        let ps: Option<Bound> = self.model.spn.as_ref().map(|s| s.params().bind(&mut tape, false));
        let xv = tape.constant(x);
        let enc = self.model.encoder.forward(&mut tape, &pe, xv);
        let q = quantize_ste(&mut tape, enc.latent, &self.model.config().centers)?;
        let source = self.switch_source(enc.levels.first().map(|l| &l.switches));
        let spn = self.model.spn.as_ref().zip(ps.as_ref());
        let dec = self.model.decoder.forward(&mut tape, &pd, q, source.as_ref(), spn)?;
        Ok(tape.value(dec.image).clone())
    }

    /// One SGD step of the discriminator on `real` against `fake`; returns
    /// the discriminator loss before the step.
    pub fn update_discriminator(&mut self, real: &Tensor, fake: &Tensor) -> Result<f64> {
        let mut dt = Tape::new();
        let pdisc = self.model.discriminator.params().bind(&mut dt, true);
        let real = dt.constant(real.clone());
        let fake = dt.constant(fake.clone());
        let d_real = self.model.discriminator.forward(&mut dt, &pdisc, real);
        let d_fake = self.model.discriminator.forward(&mut dt, &pdisc, fake);
        let loss = tape_d_loss(&mut dt, d_real, d_fake);
        let value = dt.value(loss).item();
        if !value.is_finite() {
            return Err(Error::TrainingAbort { component: "d_loss".into() });
        }
        let grads = pdisc.grads(&dt, &dt.backward(loss));
        drop(dt);
        self.opt_disc.update(self.model.discriminator.params_mut(), &grads);
        Ok(value)
    }

    /// One discriminator update followed by one encoder/decoder(/SPN) update.
    pub fn train_step(&mut self, batch: &[ImageTensor]) -> Result<StepMetrics> {
        if batch.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        let x = Tensor::stack(&batch.iter().map(ImageTensor::to_nchw).collect::<Vec<_>>());
        let variant = self.model.variant();

        // Generator forward.
        let mut tape = Tape::new();
        let pe = self.model.encoder.params().bind(&mut tape, true);
        let pd = self.model.decoder.params().bind(&mut tape, true);
        let ps: Option<Bound> = self.model.spn.as_ref().map(|s| s.params().bind(&mut tape, true));
        let xv = tape.constant(x.clone());
        let enc = self.model.encoder.forward(&mut tape, &pe, xv);
        let q = quantize_ste(&mut tape, enc.latent, &self.model.config().centers)?;
        let recorded = enc.levels.first().map(|l| &l.switches);
        let source = self.switch_source(recorded);
        let spn = self.model.spn.as_ref().zip(ps.as_ref());
        let dec = self.model.decoder.forward(&mut tape, &pd, q, source.as_ref(), spn)?;
        let fake = tape.value(dec.image).clone();

        // Discriminator update on its own tape.

        let d_loss = self.update_discriminator(&x, &fake)?;

        // Generator objective against the updated discriminator.
        let pdisc = self.model.discriminator.params().bind(&mut tape, false);
        let d_fake = self.model.discriminator.forward(&mut tape, &pdisc, dec.image);
        let g = tape_g_loss(&mut tape, d_fake);
        let mse = tape.mse(dec.image, xv);
        let perceptual = tape_perceptual(&mut tape, &self.extractor, xv, dec.image)?;
        let pairs: Vec<(Var, Var)> = enc.levels.iter().map(|l| l.pooled).zip(dec.features.iter().copied()).collect();
        let sae = tape_sae(&mut tape, &pairs)?;
        let spn_aux = match (dec.spn_raw, recorded) {
            (Some(raw), Some(sw)) => {
                let target = midpoint_targets(sw, tape.value(raw).shape());
                let target = tape.constant(target);
                Some(tape.mse(raw, target))
            }
            _ => None,
        };
        let value = |v: Option<Var>, tape: &Tape| v.map_or(0.0, |v| tape.value(v).item());
        let parts = LossParts {
            g_loss: tape.value(g).item(),
            mse: tape.value(mse).item(),
            perceptual: tape.value(perceptual).item(),
            sae: value(sae, &tape),
            spn_aux: value(spn_aux, &tape),
        };
        parts.check_finite()?;
        let w = self.cfg.weights;
        let mut total = weighted(&mut tape, None, g, self.cfg.lambda_gan);
        total = weighted(&mut tape, total, mse, w.lambda_mse);
        total = weighted(&mut tape, total, perceptual, w.lambda_p);
        if let Some(s) = sae {
            total = weighted(&mut tape, total, s, w.lambda_s);
        }
        if let Some(a) = spn_aux {
            total = weighted(&mut tape, total, a, 1.0);
        }
        let switch_accuracy = match (variant, &dec.used_switches, recorded) {
            (Variant::SaeSpn, Some(pred), Some(truth)) => {
                Some(pred.iter().zip(truth.iter()).filter(|(a, b)| a == b).count() as f64 / truth.len().max(1) as f64)
            }
            _ => None,
        };
        let Some(total) = total else {
            // Every weight is zero: nothing to update.
            return Ok(StepMetrics {
                d_loss,
                parts,
                total: 0.0,
                switch_accuracy,
                encoder_grad_norm: 0.0,
                grad_norm: 0.0,
            });
        };
        let total_value = tape.value(total).item();
        let grads = tape.backward(total);
        let ge = pe.grads(&tape, &grads);
        let gd = pd.grads(&tape, &grads);
        let gs = ps.as_ref().map(|b| b.grads(&tape, &grads));
        drop(grads);
        drop(dec);
        drop(enc);
        drop(tape);
        let norm = grad_norm(&[&ge, &gd, gs.as_deref().unwrap_or(&[])]);
        if !norm.is_finite() {
            return Err(Error::TrainingAbort { component: "gradient".into() });
        }
        if norm > EXPLODING_GRADIENT_NORM {
            warn!("exploding gradient: norm {norm:.3e} > {EXPLODING_GRADIENT_NORM:e}");
        }
        let encoder_grad_norm = ge.first().map_or(0.0, Tensor::norm);
        self.opt_encoder.update(self.model.encoder.params_mut(), &ge);
        self.opt_decoder.update(self.model.decoder.params_mut(), &gd);
        if let (Some(opt), Some(spn), Some(gs)) = (&mut self.opt_spn, &mut self.model.spn, gs) {
            opt.update(spn.params_mut(), &gs);
        }
        Ok(StepMetrics { d_loss, parts, total: total_value, switch_accuracy, encoder_grad_norm, grad_norm: norm })
    }

    fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    /// Train one epoch over shuffled batches and append a history row.
    pub fn run_epoch(&mut self, data: &PatchDataset) -> Result<HistoryRow> {
        if data.is_empty() {
            return Err(Error::Shape("empty dataset".into()));
        }
        let epoch = self.epoch;
        self.set_epoch_lr(epoch);
        let mut rng = self.epoch_rng(epoch);
        let batches = data.batches(self.cfg.batch, &mut rng);
        let mut row = HistoryRow::new(epoch + 1);
        for idx in &batches {
            let batch: Vec<ImageTensor> = idx.iter().map(|&i| data.patches()[i].clone()).collect();
            let m = self.train_step(&batch)?;
            row.d_loss += m.d_loss;
            row.g_loss += m.parts.g_loss;
            row.mse += m.parts.mse;
            row.perceptual += m.parts.perceptual;
            row.sae += m.parts.sae;
            row.spn_aux += m.parts.spn_aux;
        }
        row.scale_losses(1.0 / batches.len() as f64);
        self.epoch += 1;
        let last = self.epoch == self.cfg.epochs;
        if last || (self.cfg.eval_every > 0 && self.epoch.is_multiple_of(self.cfg.eval_every)) {
            let (p, f) = self.evaluate(data.patches())?;
            row.psnr = p;
            row.fid = f;
        }
        info!(
            "epoch {}: d_loss {:.4} g_loss {:.4} mse {:.5} psnr {:.2}",
            row.epoch, row.d_loss, row.g_loss, row.mse, row.psnr
        );
        self.history.push(row.clone());
        Ok(row)
    }

    /// Train until `cfg.epochs` epochs are complete.
    pub fn fit(&mut self, data: &PatchDataset) -> Result<&[HistoryRow]> {
        self.fit_until(data, self.cfg.epochs)
    }

    /// Train until `stop` epochs (capped at `cfg.epochs`) are complete.
    pub fn fit_until(&mut self, data: &PatchDataset, stop: usize) -> Result<&[HistoryRow]> {
        while self.epoch < stop.min(self.cfg.epochs) {
            self.run_epoch(data)?;
        }
        Ok(&self.history)
    }

    /// Mean PSNR and the FID between `images` and their inference-mode
    /// reconstructions. FID is NaN when it cannot be computed.
    pub fn evaluate(&self, images: &[ImageTensor]) -> Result<(f64, f64)> {
        let recon = images.iter().map(|i| self.model.reconstruct(i)).collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        for (a, b) in images.iter().zip(&recon) {
            total += psnr(a, b, 1.0)?;
        }
        let psnr_mean = total / images.len().max(1) as f64;
        let fid_value = if images.len() >= 2 {
            let stats = |set: &[ImageTensor]| gaussian_stats(&fid_features(set, &self.extractor)?);
            match (stats(images), stats(&recon)) {
                (Ok(a), Ok(b)) => fid(&a, &b).unwrap_or_else(|e| {
                    warn!("FID unavailable: {e}");
                    f64::NAN
                }),
                (Err(e), _) | (_, Err(e)) => {
                    warn!("FID unavailable: {e}");
                    f64::NAN
                }
            }
        } else {
            f64::NAN
        };
        Ok((psnr_mean, fid_value))
    }

    /// Inference-mode pixel and per-level feature errors over `images`.
    pub fn reconstruction_report(&self, images: &[ImageTensor]) -> Result<ReconstructionReport> {
        reconstruction_report(&self.model, images)
    }
}

/// Pixel MSE and mirrored-feature errors of `model` in inference mode, using
/// each variant's own switch source.
pub fn reconstruction_report(model: &CompressNet, images: &[ImageTensor]) -> Result<ReconstructionReport> {
    if images.is_empty() {
        return Err(Error::Shape("no images".into()));
    }
    let mut mse = 0.0;
    let mut levels: Vec<f64> = Vec::new();
    for img in images {
        let mut tape = Tape::new();
        let pe = model.encoder.params().bind(&mut tape, false);
        let pd = model.decoder.params().bind(&mut tape, false);
        let ps = model.spn.as_ref().map(|s| s.params().bind(&mut tape, false));
        let x = tape.constant(img.to_nchw());
        let enc = model.encoder.forward(&mut tape, &pe, x);
        let q = crate::quantizer::quantize_values(tape.value(enc.latent), &model.config().centers)?;
        let q = tape.constant(q);
        let source = match model.variant() {
            Variant::Swwae => enc.levels.first().map(|l| SwitchSource::Given(Rc::clone(&l.switches))),
            Variant::SaeSpn => Some(SwitchSource::Predicted),
            Variant::Plain | Variant::SaeAll => None,
        };
        let spn = model.spn.as_ref().zip(ps.as_ref());
        let dec = model.decoder.forward(&mut tape, &pd, q, source.as_ref(), spn)?;
        mse += tape.value(dec.image).zip_map(&img.to_nchw(), |a, b| (a - b).powi(2)).mean();
        levels.resize(enc.levels.len(), 0.0);
        for (i, (l, f)) in enc.levels.iter().zip(&dec.features).enumerate() {
            levels[i] += tape.value(l.pooled).zip_map(tape.value(*f), |a, b| (a - b).powi(2)).mean();
        }
    }
    let n = images.len() as f64;
    Ok(ReconstructionReport { mse: mse / n, level_errors: levels.into_iter().map(|v| v / n).collect() })
}

/// Train a fresh model on `data` for `cfg.epochs` epochs.
pub fn fit(data: &PatchDataset, cfg: TrainConfig) -> Result<Trainer> {
    let mut trainer = Trainer::new(cfg)?;
    trainer.fit(data)?;
    Ok(trainer)
}
