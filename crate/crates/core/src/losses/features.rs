//! Convolutional feature extractors for the perceptual loss and FID.

use std::path::Path;

use autograd::init::kaiming_uniform;
use autograd::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
enum Op {
    Conv { weight: ParamId, bias: ParamId, stride: usize, pad: usize },
    Relu,
    MaxPool { kernel: usize, stride: usize },
}

/// Input normalization applied before the first layer.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Normalize {
    mean: [f64; 3],
    std: [f64; 3],
}

/// Fixed-weight convolutional stack. Deterministic given its weights,
/// identified by their digest.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    name: String,
    ops: Vec<Op>,
    params: ParamStore,
    normalize: Option<Normalize>,
    digest: [u8; 32],
}

/// AlexNet up to the 4th convolution (post-ReLU): `(out, in, kernel, stride, pad)`.
const ALEXNET_CONVS: [(usize, usize, usize, usize, usize); 4] =
    [(64, 3, 11, 4, 2), (192, 64, 5, 1, 2), (384, 192, 3, 1, 1), (256, 384, 3, 1, 1)];

fn weights_digest(params: &ParamStore) -> [u8; 32] {
    let mut h = Sha256::new();
    for (_, t) in params.iter() {
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().into()
}

impl FeatureExtractor {
    /// Small random network: four 3×3 convolutions (strides 1, 2, 1, 2) with
    /// ReLU. Accepts inputs down to 1×1.
    pub fn test_profile(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut ops = Vec::new();
        for (i, (out, input, stride)) in [(8, 3, 1), (16, 8, 2), (16, 16, 1), (32, 16, 2)].into_iter().enumerate() {
            let weight = params.add(format!("fe.{i}.weight"), kaiming_uniform(&mut rng, &[out, input, 3, 3]));
            let bias = params.add(format!("fe.{i}.bias"), Tensor::zeros(&[out]));
            ops.push(Op::Conv { weight, bias, stride, pad: 1 });
            ops.push(Op::Relu);
        }
        let digest = weights_digest(&params);
        Self { name: format!("test-profile(seed={seed})"), ops, params, normalize: None, digest }
    }

    /// AlexNet conv1–conv4 from a raw little-endian `f32` file holding, per
    /// convolution, the `[out, in, k, k]` weights then the biases. The file's
    /// SHA-256 must equal `expected_sha256` (hex).
    pub fn alexnet_conv4(path: impl AsRef<Path>, expected_sha256: &str) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let found = hex::encode(Sha256::digest(&bytes));
        if !found.eq_ignore_ascii_case(expected_sha256.trim()) {
            return Err(Error::DigestMismatch { expected: expected_sha256.trim().to_lowercase(), found });
        }
        let need: usize = ALEXNET_CONVS.iter().map(|&(o, i, k, _, _)| o * i * k * k + o).sum();
        if bytes.len() != need * 4 {
            return Err(Error::Corruption(format!("extractor weights: {} bytes, expected {}", bytes.len(), need * 4)));
        }
        let mut values = bytes.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))));
        let mut take =
            |shape: &[usize]| Tensor::from_vec(shape, values.by_ref().take(shape.iter().product()).collect());
        let mut params = ParamStore::new();
        let mut ops = Vec::new();
        for (i, &(out, input, k, stride, pad)) in ALEXNET_CONVS.iter().enumerate() {
            let weight = params.add(format!("conv{}.weight", i + 1), take(&[out, input, k, k]));
            let bias = params.add(format!("conv{}.bias", i + 1), take(&[out]));
            ops.push(Op::Conv { weight, bias, stride, pad });
            ops.push(Op::Relu);
            if i < 2 {
                ops.push(Op::MaxPool { kernel: 3, stride: 2 });
            }
        }
        let digest = weights_digest(&params);
        Ok(Self {
            name: "alexnet-conv4".into(),
            ops,
            params,
            normalize: Some(Normalize { mean: [0.485, 0.456, 0.406], std: [0.229, 0.224, 0.225] }),
            digest,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn digest(&self) -> [u8; 32] {
        self.digest
    }

    /// Differentiable features of an `[N, 3, H, W]` batch in `[0, 1]`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let shape = tape.value(x).shape().to_vec();
        if shape.len() != 4 || shape[1] != 3 {
            return Err(Error::Shape(format!("feature extractor expects [N, 3, H, W], got {shape:?}")));
        }
        let p = self.params.bind(tape, false);
        let mut h = match self.normalize {
            Some(n) => {
                let (b, _, hh, ww) = (shape[0], shape[1], shape[2], shape[3]);
                let plane = hh * ww;
                let mut scale = vec![0.0; b * 3 * plane];
                let mut shift = vec![0.0; b * 3 * plane];
                for i in 0..b * 3 {
                    let c = i % 3;
                    scale[i * plane..(i + 1) * plane].fill(1.0 / n.std[c]);
                    shift[i * plane..(i + 1) * plane].fill(-n.mean[c] / n.std[c]);
                }
                let s = tape.constant(Tensor::from_vec(&shape, scale));
                let t = tape.constant(Tensor::from_vec(&shape, shift));
                let xs = tape.mul(x, s);
                tape.add(xs, t)
            }
            None => x,
        };
        for op in &self.ops {
            h = match *op {
                Op::Conv { weight, bias, stride, pad } => {
                    let (_, _, hh, ww) = tape.value(h).dims4();
                    let k = self.params.get(weight).shape()[2];
                    if hh + 2 * pad < k || ww + 2 * pad < k {
                        return Err(Error::Shape(format!("input {hh}x{ww} too small for {}", self.name)));
                    }
                    tape.conv2d(h, p.var(weight), Some(p.var(bias)), stride, pad)
                }
                Op::Relu => tape.relu(h),
                Op::MaxPool { kernel, stride } => {
                    let (_, _, hh, ww) = tape.value(h).dims4();
                    if hh < kernel || ww < kernel {
                        return Err(Error::Shape(format!("input too small for {}", self.name)));
                    }
                    tape.maxpool(h, kernel, stride)
                }
            };
        }
        Ok(h)
    }

    /// Feature maps of a batch, without gradient bookkeeping.
    pub fn extract(&self, batch: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(batch.clone());
        let f = self.forward(&mut tape, x)?;
        Ok(tape.value(f).clone())
    }

    /// Globally average-pooled feature vector per image.
    pub fn pooled(&self, batch: &Tensor) -> Result<Vec<Vec<f64>>> {
        let f = self.extract(batch)?;
        let (n, c, h, w) = f.dims4();
        let plane = h * w;
        Ok((0..n)
            .map(|i| {
                let s = f.sample(i);
                (0..c).map(|ch| s[ch * plane..(ch + 1) * plane].iter().sum::<f64>() / plane as f64).collect()
            })
            .collect())
    }
}
