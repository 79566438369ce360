//! Model configuration and the flat `key = value` config format.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::quantizer::CenterTable;

/// Full-scale architectures, the defaults.
pub const FULL_ENCODER_ARCH: &str = "c7s1-60, d120, d240, d480, d960";
pub const FULL_DECODER_ARCH: &str = "c3s1-960, R960 X 9, u480, u240, u120, u60, c7s1-3";
pub const FULL_DISC_ARCH: &str = "c4s2p1-64, c4s2p1-128, c4s2p1-192, c4s2p1-256, c4s2p1-512, c4s1p1-1";

/// Narrow architecture with the same layer structure, sized for CPU runs on
/// 64×64 patches.
pub const DESK_ENCODER_ARCH: &str = "c7s1-8, d16, d32, d32, d64";
pub const DESK_DECODER_ARCH: &str = "c3s1-64, R64 X 2, u32, u32, u16, u8, c7s1-3";
pub const DESK_DISC_ARCH: &str = "c4s2p1-8, c4s2p1-16, c4s2p1-32, c4s1p1-1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Strided convolutions and sub-pixel upsampling, no layer-wise loss.
    Plain,
    /// Stacked autoencoder with layer-wise loss, no switch information.
    SaeAll,
    /// Stacked what-where autoencoder; first-level switches are transmitted.
    Swwae,
    /// Stacked autoencoder with a switch prediction network.
    SaeSpn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Plain, Variant::SaeAll, Variant::Swwae, Variant::SaeSpn];

    pub fn code(self) -> u8 {
        match self {
            Variant::Plain => 0,
            Variant::SaeAll => 1,
            Variant::Swwae => 2,
            Variant::SaeSpn => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.code() == code)
            .ok_or_else(|| Error::Corruption(format!("unknown variant code {code}")))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::SaeAll => "sae_all",
            Variant::Swwae => "swwae",
            Variant::SaeSpn => "sae_spn",
        }
    }

    /// Down layers pool (emitting switches) instead of striding.
    pub fn is_stacked(self) -> bool {
        self != Variant::Plain
    }

    /// The last up stage unpools with first-level switches.
    pub fn unpools_first_level(self) -> bool {
        matches!(self, Variant::Swwae | Variant::SaeSpn)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?} (expected plain, sae_all, swwae or sae_spn)")))
    }
}

/// Everything that determines the inference-time networks.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub encoder_arch: String,
    pub decoder_arch: String,
    pub disc_arch: String,
    pub latent_channels: usize,
    pub centers: CenterTable,
    /// Seed for weight initialization.
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::SaeSpn,
            encoder_arch: FULL_ENCODER_ARCH.into(),
            decoder_arch: FULL_DECODER_ARCH.into(),
            disc_arch: FULL_DISC_ARCH.into(),
            latent_channels: 8,
            centers: CenterTable::default(),
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn desk(variant: Variant, latent_channels: usize) -> Self {
        Self {
            variant,
            encoder_arch: DESK_ENCODER_ARCH.into(),
            decoder_arch: DESK_DECODER_ARCH.into(),
            disc_arch: DESK_DISC_ARCH.into(),
            latent_channels,
            ..Self::default()
        }
    }

    pub fn levels(&self) -> usize {
        self.centers.len()
    }

    /// Canonical text of the fields that shape the encoder/decoder.
    pub fn canonical(&self) -> String {
        format!(
            "variant={}\nencoder_arch={}\ndecoder_arch={}\nlatent_channels={}\ncenters={}\n",
            self.variant, self.encoder_arch, self.decoder_arch, self.latent_channels, self.centers
        )
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical().as_bytes()).into()
    }
}

/// Ordered `key = value` pairs. `#` starts a comment; blank lines are skipped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            kv.set(k.trim(), v.trim());
        }
        Ok(kv)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parse a `key=value` override.
    pub fn set_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.get(key).map(|v| v.parse::<T>().map_err(|e| Error::Config(format!("{key} = {v:?}: {e}")))).transpose()
    }

    /// Fail on any key outside `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(Error::Config(format!("unknown key {k:?}"))),
            None => Ok(()),
        }
    }

    pub fn render(&self) -> String {
        self.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

pub(crate) const MODEL_KEYS: &[&str] =
    &["variant", "encoder_arch", "decoder_arch", "disc_arch", "latent_channels", "centers", "init_seed"];

impl ModelConfig {
    /// Apply the model keys present in `kv` on top of `self`.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        if let Some(v) = kv.get("variant") {
            self.variant = v.parse()?;
        }
        for (key, slot) in [
            ("encoder_arch", &mut self.encoder_arch),
            ("decoder_arch", &mut self.decoder_arch),
            ("disc_arch", &mut self.disc_arch),
        ] {
            if let Some(v) = kv.get(key) {
                *slot = v.to_string();
            }
        }
        if let Some(c) = kv.parsed::<usize>("latent_channels")? {
            self.latent_channels = c;
        }
        if let Some(v) = kv.get("centers") {
            self.centers = v.parse()?;
        }
        if let Some(s) = kv.parsed::<u64>("init_seed")? {
            self.init_seed = s;
        }
        if self.latent_channels == 0 || self.latent_channels > 255 {
            return Err(Error::Config(format!("latent_channels {} not in 1..=255", self.latent_channels)));
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("variant", self.variant.as_str());
        kv.set("encoder_arch", &self.encoder_arch);
        kv.set("decoder_arch", &self.decoder_arch);
        kv.set("disc_arch", &self.disc_arch);
        kv.set("latent_channels", &self.latent_channels.to_string());
        kv.set("centers", &self.centers.to_string());
        kv.set("init_seed", &self.init_seed.to_string());
        kv
    }
}
