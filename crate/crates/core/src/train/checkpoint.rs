//! Binary checkpoint: config, epoch, history, weights and optimizer state,
//! sealed by a trailing SHA-256 of everything before it.

use std::io::Write;
use std::path::Path;

use autograd::{Adam, Tensor};
use sha2::{Digest, Sha256};

use super::config::TrainConfig;
use super::history::HistoryRow;
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::model::CompressNet;

const MAGIC: &[u8; 4] = b"CNCK";
const VERSION: u8 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<HistoryRow>,
    /// Parameter values per store, in `CompressNet::stores` order.
    pub params: Vec<Vec<Tensor>>,
    /// Encoder, decoder and (for `sae_spn`) SPN optimizer states.
    pub adam: Vec<Adam>,
    pub sgd_lr: f64,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Config(format!("{v} does not fit a checkpoint field")))?;
        self.0.extend(v.to_le_bytes());
        Ok(())
    }
    fn u64(&mut self, v: u64) {
        self.0.extend(v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend(v.to_le_bytes());
    }
    fn text(&mut self, s: &str) -> Result<()> {
        self.u32(s.len())?;
        self.0.extend(s.as_bytes());
        Ok(())
    }
    fn tensors(&mut self, ts: &[Tensor]) -> Result<()> {
        self.u32(ts.len())?;
        for t in ts {
            let ndim = u8::try_from(t.shape().len()).map_err(|_| Error::Config("tensor rank > 255".into()))?;
            self.u8(ndim);
            for &d in t.shape() {
                self.u32(d)?;
            }
            for &v in t.data() {
                self.f64(v);
            }
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corruption(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn text(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Corruption("checkpoint text is not UTF-8".into()))
    }
    fn tensors(&mut self) -> Result<Vec<Tensor>> {
        let count = self.u32()?;
        let mut out = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let ndim = self.u8()? as usize;
            let shape = (0..ndim).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
            let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let len = len
                .filter(|&l| l.saturating_mul(8) <= self.bytes.len() - self.pos)
                .ok_or_else(|| Error::Corruption(format!("tensor shape {shape:?} exceeds the checkpoint")))?;
            let data =
                self.take(len * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect();
            out.push(Tensor::from_vec(&shape, data));
        }
        Ok(out)
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer(Vec::new());
        w.0.extend(MAGIC);
        w.u8(VERSION);
        w.text(&self.config.to_key_values().render())?;
        w.u32(self.epoch)?;
        w.text(&HistoryRow::render_csv(&self.history))?;
        w.u32(self.params.len())?;
        for group in &self.params {
            w.tensors(group)?;
        }
        w.u32(self.adam.len())?;
        for a in &self.adam {
            w.u64(a.step);
            for v in [a.lr, a.beta1, a.beta2, a.eps] {
                w.f64(v);
            }
            w.tensors(&a.m)?;
            w.tensors(&a.v)?;
        }
        w.f64(self.sgd_lr);
        let digest = Sha256::digest(&w.0);
        w.0.extend(digest);
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 1 + DIGEST_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Corruption("not a checkpoint (bad magic)".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::UnsupportedVersion(bytes[4]));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        let actual = Sha256::digest(body);
        if actual.as_slice() != digest {
            return Err(Error::DigestMismatch { expected: hex::encode(digest), found: hex::encode(actual) });
        }
        let mut r = Reader { bytes: body, pos: 5 };
        let config = TrainConfig::from_key_values(&KeyValues::parse(&r.text()?)?)?;
        let epoch = r.u32()?;
        let history = HistoryRow::parse_csv(&r.text()?)?;
        let groups = r.u32()?;
        let params = (0..groups.min(16)).map(|_| r.tensors()).collect::<Result<Vec<_>>>()?;
        if params.len() != groups {
            return Err(Error::Corruption(format!("{groups} parameter groups")));
        }
        let n_adam = r.u32()?;
        if n_adam > 3 {
            return Err(Error::Corruption(format!("{n_adam} optimizer states")));
        }
        let mut adam = Vec::with_capacity(n_adam);
        for _ in 0..n_adam {
            let step = r.u64()?;
            let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            let m = r.tensors()?;
            let v = r.tensors()?;
            adam.push(Adam { lr, beta1, beta2, eps, step, m, v });
        }
        let sgd_lr = r.f64()?;
        if r.pos != body.len() {
            return Err(Error::Corruption(format!("{} trailing bytes in checkpoint", body.len() - r.pos)));
        }
        Ok(Self { config, epoch, history, params, adam, sgd_lr })
    }

    /// Write to a sibling temp file, then rename over `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
        tmp_name.push(format!(".tmp{}", std::process::id()));
        let tmp = path.with_file_name(tmp_name);
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path).inspect_err(|_| {
            let _ = std::fs::remove_file(&tmp);
        })?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Rebuild the model and load the stored weights.
    pub fn model(&self) -> Result<CompressNet> {
        let mut model = CompressNet::new(self.config.model.clone())?;
        model.import_params(self.params.clone())?;
        Ok(model)
    }
}

/// Load only the model from a checkpoint file.
pub fn load_model(path: impl AsRef<Path>) -> Result<CompressNet> {
    Checkpoint::load(path)?.model()
}
