use std::path::PathBuf;

use crate::config::{KeyValues, ModelConfig, MODEL_KEYS};
use crate::data::DataConfig;
use crate::error::{Error, Result};
use crate::losses::LossWeights;

const TRAIN_KEYS: &[&str] = &[
    "lr_eg",
    "lr_d",
    "lr_decay",
    "decay_interval",
    "epochs",
    "batch",
    "lambda_mse",
    "lambda_p",
    "lambda_s",
    "lambda_gan",
    "seed",
    "data_dir",
    "patch_size",
    "flip_prob",
    "num_patches",
    "clahe",
    "clahe_tiles",
    "clahe_clip_limit",
    "clahe_bins",
    "eval_every",
    "perceptual_weights",
    "perceptual_sha256",
];

/// Every key a training config file may contain.
pub fn known_keys() -> Vec<&'static str> {
    MODEL_KEYS.iter().chain(TRAIN_KEYS).copied().collect()
}

/// Where the perceptual feature extractor comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum PerceptualSource {
    /// Fixed-seed random network.
    TestProfile,
    /// AlexNet conv4 weights file with its pinned SHA-256.
    Weights { path: PathBuf, sha256: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub lr_eg: f64,
    pub lr_d: f64,
    pub lr_decay: f64,
    pub decay_interval: usize,
    pub epochs: usize,
    pub batch: usize,
    pub weights: LossWeights,
    /// Weight of the generator's adversarial term.
    pub lambda_gan: f64,
    pub seed: u64,
    pub data_dir: Option<PathBuf>,
    pub data: DataConfig,
    /// Evaluate PSNR/FID every this many epochs (0: only after the last).
    pub eval_every: usize,
    pub perceptual: PerceptualSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            lr_eg: 2e-3,
            lr_d: 2e-5,
            lr_decay: 0.5,
            decay_interval: 20,
            epochs: 200,
            batch: 4,
            weights: LossWeights::default(),
            lambda_gan: 1.0,
            seed: 0,
            data_dir: None,
            data: DataConfig::default(),
            eval_every: 10,
            perceptual: PerceptualSource::TestProfile,
        }
    }
}

fn parse_tiles(v: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("clahe_tiles {v:?} is not <rows>x<cols>"));
    let (a, b) = v.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

impl TrainConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(kv)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.reject_unknown(&known_keys())?;
        self.model.apply(kv)?;
        macro_rules! set {
            ($($key:literal => $slot:expr),* $(,)?) => {
                $(if let Some(v) = kv.parsed($key)? { $slot = v; })*
            };
        }
        set! {
            "lr_eg" => self.lr_eg,
            "lr_d" => self.lr_d,
            "lr_decay" => self.lr_decay,
            "decay_interval" => self.decay_interval,
            "epochs" => self.epochs,
            "batch" => self.batch,
            "lambda_mse" => self.weights.lambda_mse,
            "lambda_p" => self.weights.lambda_p,
            "lambda_s" => self.weights.lambda_s,
            "lambda_gan" => self.lambda_gan,
            "seed" => self.seed,
            "patch_size" => self.data.patch_size,
            "flip_prob" => self.data.flip_prob,
            "num_patches" => self.data.num_patches,
            "eval_every" => self.eval_every,
        }
        if let Some(dir) = kv.get("data_dir") {
            self.data_dir = (!dir.is_empty()).then(|| PathBuf::from(dir));
        }
        let mut clahe = self.data.clahe.unwrap_or_default();
        let mut clahe_on = self.data.clahe.is_some();
        if let Some(on) = kv.parsed::<bool>("clahe")? {
            clahe_on = on;
        }
        if let Some(t) = kv.get("clahe_tiles") {
            clahe.tiles = parse_tiles(t)?;
        }
        if let Some(c) = kv.parsed("clahe_clip_limit")? {
            clahe.clip_limit = c;
        }
        if let Some(b) = kv.parsed("clahe_bins")? {
            clahe.bins = b;
        }
        self.data.clahe = clahe_on.then_some(clahe);
        match (kv.get("perceptual_weights").filter(|p| !p.is_empty()), kv.get("perceptual_sha256")) {
            (Some(path), Some(sha)) => {
                self.perceptual = PerceptualSource::Weights { path: path.into(), sha256: sha.to_string() }
            }
            (Some(_), None) => return Err(Error::Config("perceptual_weights requires perceptual_sha256".into())),
            (None, _) => {}
        }
        if kv.get("seed").is_some() && kv.get("init_seed").is_none() {
            self.model.init_seed = self.seed;
        }
        self.data.seed = self.seed;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lr_eg", self.lr_eg), ("lr_d", self.lr_d), ("lr_decay", self.lr_decay)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        for (name, v) in [("decay_interval", self.decay_interval), ("epochs", self.epochs), ("batch", self.batch)] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.lambda_gan >= 0.0 && self.lambda_gan.is_finite()) {
            return Err(Error::Config(format!("lambda_gan = {} must be non-negative", self.lambda_gan)));
        }
        self.weights.validate()?;
        if let Some(c) = &self.data.clahe {
            c.validate()?;
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = self.model.to_key_values();
        let mut set = |k: &str, v: String| kv.set(k, &v);
        set("lr_eg", self.lr_eg.to_string());
        set("lr_d", self.lr_d.to_string());
        set("lr_decay", self.lr_decay.to_string());
        set("decay_interval", self.decay_interval.to_string());
        set("epochs", self.epochs.to_string());
        set("batch", self.batch.to_string());
        set("lambda_mse", self.weights.lambda_mse.to_string());
        set("lambda_p", self.weights.lambda_p.to_string());
        set("lambda_s", self.weights.lambda_s.to_string());
        set("lambda_gan", self.lambda_gan.to_string());
        set("seed", self.seed.to_string());
        set("data_dir", self.data_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        set("patch_size", self.data.patch_size.to_string());
        set("flip_prob", self.data.flip_prob.to_string());
        set("num_patches", self.data.num_patches.to_string());
        set("eval_every", self.eval_every.to_string());
        set("clahe", self.data.clahe.is_some().to_string());
        let c = self.data.clahe.unwrap_or_default();
        set("clahe_tiles", format!("{}x{}", c.tiles.0, c.tiles.1));
        set("clahe_clip_limit", c.clip_limit.to_string());
        set("clahe_bins", c.bins.to_string());
        if let PerceptualSource::Weights { path, sha256 } = &self.perceptual {
            set("perceptual_weights", path.display().to_string());
            set("perceptual_sha256", sha256.clone());
        }
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_text() {
        let kv = KeyValues::parse(
            "variant = swwae\nlatent_channels = 4\nepochs = 3\nbatch = 2\nclahe = true\nclahe_tiles = 4x2\nlambda_p = 0\n",
        )
        .unwrap();
        let cfg = TrainConfig::from_key_values(&kv).unwrap();
        assert_eq!(cfg.data.clahe.unwrap().tiles, (4, 2));
        assert_eq!(cfg.weights.lambda_p, 0.0);
        let back = TrainConfig::from_key_values(&KeyValues::parse(&cfg.to_key_values().render()).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_and_invalid_keys() {
        assert!(TrainConfig::from_key_values(&KeyValues::parse("learning_rate = 1").unwrap()).is_err());
        assert!(TrainConfig::from_key_values(&KeyValues::parse("batch = 0").unwrap()).is_err());
        assert!(TrainConfig::from_key_values(&KeyValues::parse("lambda_s = -1").unwrap()).is_err());
        assert!(TrainConfig::from_key_values(&KeyValues::parse("perceptual_weights = a.bin").unwrap()).is_err());
    }
}
