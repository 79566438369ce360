//! Differentiable networks realized from [`NetworkSpec`]s.
//!
//! In the stacked variants every `d` layer is a 2×2 max-pool (recording
//! switches) followed by a stride-1 convolution, and every `u` layer is a
//! stride-1 convolution followed by a 2×2 upsampling. The pool/unpool pairs
//! mirror each other, so the feature entering pool level `ℓ` in the encoder
//! and the feature leaving the convolution of up level `ℓ` in the decoder
//! have the same shape; the layer-wise loss compares those pairs.

use std::rc::Rc;

use autograd::init::{icnr, kaiming_uniform};
use autograd::{Bound, ParamId, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Activation, LayerKind, LayerSpec, Norm, Padding, Stride, INSTANCE_NORM_EPS, LEAKY_SLOPE};
use super::shape::{NetworkRole, NetworkSpec};
use crate::config::Variant;
use crate::error::{Error, Result};
use crate::switches::{self, Spn};

/// Padding + convolution with its own weight and bias.
#[derive(Clone, Debug)]
pub(crate) struct ConvUnit {
    weight: ParamId,
    bias: ParamId,
    stride: usize,
    padding: Padding,
}

impl ConvUnit {
    #[allow(clippy::too_many_arguments)]
    fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        input: usize,
        output: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        subpixel: bool,
    ) -> Self {
        let w = if subpixel {
            icnr(rng, output, input, kernel, 2)
        } else {
            kaiming_uniform(rng, &[output, input, kernel, kernel])
        };
        let out_channels = w.shape()[0];
        let weight = store.add(format!("{name}.weight"), w);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]));
        Self { weight, bias, stride, padding }
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Var {
        let (x, zero_pad) = match self.padding {
            Padding::Reflect(r) => (tape.reflect_pad(x, r), 0),
            Padding::Zero(z) => (x, z),
        };
        tape.conv2d(x, p.var(self.weight), Some(p.var(self.bias)), self.stride, zero_pad)
    }
}

/// Convolution (optionally sub-pixel shuffled) + normalization + activation.
#[derive(Clone, Debug)]
pub(crate) struct ConvBlock {
    conv: ConvUnit,
    shuffle: bool,
    norm: Norm,
    activation: Activation,
    output_scale: f64,
}

pub(crate) struct BlockBuilder<'a> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut ChaCha8Rng,
}

impl BlockBuilder<'_> {
    pub(crate) fn block(&mut self, name: &str, input: usize, spec: &LayerSpec, stride: usize) -> ConvBlock {
        let conv =
            ConvUnit::new(self.store, self.rng, name, input, spec.filters, spec.kernel, stride, spec.padding, false);
        ConvBlock { conv, shuffle: false, norm: spec.norm, activation: spec.activation, output_scale: 1.0 }
    }

    /// Sub-pixel ×2 upsampling to `spec.filters` channels, ICNR initialized.
    fn subpixel(&mut self, name: &str, input: usize, spec: &LayerSpec) -> ConvBlock {
        let conv = ConvUnit::new(self.store, self.rng, name, input, spec.filters, spec.kernel, 1, spec.padding, true);
        ConvBlock { conv, shuffle: true, norm: spec.norm, activation: spec.activation, output_scale: 1.0 }
    }
}

impl ConvBlock {
    pub(crate) fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Var {
        let mut y = self.conv.forward(tape, p, x);
        if self.shuffle {
            y = tape.pixel_shuffle(y, 2);
        }
        if self.norm == Norm::Instance {
            y = tape.instance_norm(y, INSTANCE_NORM_EPS);
        }
        y = match self.activation {
            Activation::Relu => tape.relu(y),
            Activation::LeakyRelu => tape.leaky_relu(y, LEAKY_SLOPE),
            Activation::Sigmoid => tape.sigmoid(y),
            Activation::Tanh => tape.tanh(y),
            Activation::None => y,
        };
        if self.output_scale != 1.0 {
            y = tape.scale(y, self.output_scale);
        }
        y
    }
}

#[derive(Clone, Debug)]
enum Stage {
    Conv(ConvBlock),
    /// Stride-2 convolution (plain variant).
    StridedDown(ConvBlock),
    /// Max-pool with switches, then stride-1 convolution.
    PoolDown(ConvBlock),
    Residual(ConvBlock, ConvBlock),
    /// Sub-pixel convolution straight from the input (plain variant).
    SubPixelUp(ConvBlock),
    /// Stride-1 convolution producing the mirrored feature, then ×2 upsampling.
    MirrorUp {
        feature: ConvBlock,
        level: usize,
        upsample: Upsample,
    },
}

#[derive(Clone, Debug)]
enum Upsample {
    SubPixel(ConvBlock),
    Unpool,
}

fn rng_for(seed: u64, role: NetworkRole) -> ChaCha8Rng {
    let tag = match role {
        NetworkRole::Encoder => 1,
        NetworkRole::Decoder => 2,
        NetworkRole::Discriminator => 3,
        NetworkRole::Spn => 4,
    };
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag)
}

fn residual_forward(tape: &mut Tape, p: &Bound, a: &ConvBlock, b: &ConvBlock, x: Var) -> Var {
    let h = a.forward(tape, p, x);
    let h = b.forward(tape, p, h);
    tape.add(x, h)
}

/// One pooling level recorded by the encoder.
#[derive(Clone, Debug)]
pub struct PoolLevel {
    /// Pooled feature (input of the level's convolution).
    pub pooled: Var,
    /// Switches in NCHW order of `pooled`.
    pub switches: Rc<Vec<u8>>,
}

pub struct EncoderOutput {
    /// Continuous latent before quantization, `[N, C, H/16, W/16]`.
    pub latent: Var,
    /// Pooling levels, first (finest) level first. Empty for `plain`.
    pub levels: Vec<PoolLevel>,
    /// Output of every layer.
    pub trace: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    spec: NetworkSpec,
    variant: Variant,
    stages: Vec<Stage>,
    params: ParamStore,
}

impl Encoder {
    /// `latent_scale` multiplies the final tanh so the latent spans the centers.
    pub fn build(spec: &NetworkSpec, variant: Variant, latent_scale: f64, seed: u64) -> Result<Self> {
        if spec.role != NetworkRole::Encoder {
            return Err(Error::Spec(format!("expected an encoder spec, got {:?}", spec.role)));
        }
        let mut params = ParamStore::new();
        let mut rng = rng_for(seed, spec.role);
        let mut b = BlockBuilder { store: &mut params, rng: &mut rng };
        let mut stages = Vec::new();
        let mut c = spec.input_channels;
        for (i, l) in spec.layers.iter().enumerate() {
            let name = format!("enc.{i}");
            let stage = match l.kind {
                LayerKind::Conv => Stage::Conv(b.block(&name, c, l, 1)),
                LayerKind::ConvFinal => {
                    let mut block = b.block(&name, c, l, 1);
                    block.output_scale = latent_scale;
                    Stage::Conv(block)
                }
                LayerKind::Down if variant.is_stacked() => Stage::PoolDown(b.block(&name, c, l, 1)),
                LayerKind::Down => Stage::StridedDown(b.block(&name, c, l, 2)),
                LayerKind::Residual => {
                    Stage::Residual(b.block(&format!("{name}.a"), c, l, 1), b.block(&format!("{name}.b"), c, l, 1))
                }
                LayerKind::Up | LayerKind::DiscConv => {
                    return Err(Error::Spec(format!("{} not allowed in an encoder", l.render())))
                }
            };
            stages.push(stage);
            c = l.filters;
        }
        Ok(Self { spec: spec.clone(), variant, stages, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> EncoderOutput {
        let mut h = x;
        let mut levels = Vec::new();
        let mut trace = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            h = match stage {
                Stage::Conv(b) | Stage::StridedDown(b) => b.forward(tape, p, h),
                Stage::PoolDown(b) => {
                    let (pooled, switches) = tape.maxpool2x2_with_switches(h);
                    levels.push(PoolLevel { pooled, switches });
                    b.forward(tape, p, pooled)
                }
                Stage::Residual(a, b) => residual_forward(tape, p, a, b, h),
                Stage::SubPixelUp(_) | Stage::MirrorUp { .. } => unreachable!("encoder has no up stages"),
            };
            trace.push(h);
        }
        EncoderOutput { latent: h, levels, trace }
    }
}

/// Where the first-level unpool takes its switches from.
#[derive(Clone, Debug)]
pub enum SwitchSource {
    /// Switches recorded by the encoder (NCHW order), as in SWWAE decoding
    /// or SPN teacher forcing.
    Given(Rc<Vec<u8>>),
    /// Bucketized SPN output.
    Predicted,
}

pub struct DecoderOutput {
    /// Reconstruction in `[0, 1]`, `[N, 3, H, W]`.
    pub image: Var,
    /// Mirrored features, first (finest) level first. Empty for `plain`.
    pub features: Vec<Var>,
    /// Raw SPN output when the model has an SPN.
    pub spn_raw: Option<Var>,
    /// Switches the first-level unpool actually used.
    pub used_switches: Option<Rc<Vec<u8>>>,
    /// Output of every layer.
    pub trace: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct Decoder {
    spec: NetworkSpec,
    variant: Variant,
    stages: Vec<Stage>,
    params: ParamStore,
}

impl Decoder {
    /// `pooled_channels` are the encoder's per-level pooled channel counts,
    /// used to check the mirror structure of the stacked variants.
    pub fn build(spec: &NetworkSpec, variant: Variant, pooled_channels: &[usize], seed: u64) -> Result<Self> {
        if spec.role != NetworkRole::Decoder {
            return Err(Error::Spec(format!("expected a decoder spec, got {:?}", spec.role)));
        }
        let ups = spec.up_filters();
        if variant.is_stacked() {
            let mirrored: Vec<usize> = pooled_channels.iter().rev().copied().collect();
            if ups != mirrored {
                return Err(Error::Spec(format!(
                    "up layers {ups:?} do not mirror the encoder's pooled channels {mirrored:?}"
                )));
            }
        }
        let mut params = ParamStore::new();
        let mut rng = rng_for(seed, spec.role);
        let mut b = BlockBuilder { store: &mut params, rng: &mut rng };
        let mut stages = Vec::new();
        let mut c = spec.input_channels;
        let mut level = ups.len();
        for (i, l) in spec.layers.iter().enumerate() {
            let name = format!("dec.{i}");
            let stage = match l.kind {
                LayerKind::Conv | LayerKind::ConvFinal => Stage::Conv(b.block(&name, c, l, 1)),
                LayerKind::Residual => {
                    Stage::Residual(b.block(&format!("{name}.a"), c, l, 1), b.block(&format!("{name}.b"), c, l, 1))
                }
                LayerKind::Up if variant.is_stacked() => {
                    let feature = b.block(&format!("{name}.feature"), c, l, 1);
                    let upsample = if level == 1 && variant.unpools_first_level() {
                        Upsample::Unpool
                    } else {
                        Upsample::SubPixel(b.subpixel(&format!("{name}.up"), l.filters, l))
                    };
                    let s = Stage::MirrorUp { feature, level, upsample };
                    level -= 1;
                    s
                }
                LayerKind::Up => Stage::SubPixelUp(b.subpixel(&name, c, l)),
                LayerKind::Down | LayerKind::DiscConv => {
                    return Err(Error::Spec(format!("{} not allowed in a decoder", l.render())))
                }
            };
            stages.push(stage);
            c = l.filters;
        }
        Ok(Self { spec: spec.clone(), variant, stages, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Channels of the first-level feature (the SPN's input and output width).
    pub fn first_level_channels(&self) -> Option<usize> {
        self.spec.up_filters().last().copied()
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        latent: Var,
        switches: Option<&SwitchSource>,
        spn: Option<(&Spn, &Bound)>,
    ) -> Result<DecoderOutput> {
        let mut h = latent;
        let mut features = Vec::new();
        let mut trace = Vec::with_capacity(self.stages.len());
        let mut spn_raw = None;
        let mut used_switches = None;
        for stage in &self.stages {
            h = match stage {
                Stage::Conv(b) | Stage::SubPixelUp(b) => b.forward(tape, p, h),
                Stage::Residual(a, b) => residual_forward(tape, p, a, b, h),
                Stage::MirrorUp { feature, level, upsample } => {
                    let f = feature.forward(tape, p, h);
                    features.push(f);
                    if *level == 1 {
                        if let Some((spn, sp)) = spn {
                            spn_raw = Some(spn.forward(tape, sp, f)?);
                        }
                    }
                    match upsample {
                        Upsample::SubPixel(b) => b.forward(tape, p, f),
                        Upsample::Unpool => {
                            let sw = match switches {
                                Some(SwitchSource::Given(s)) => Rc::clone(s),
                                Some(SwitchSource::Predicted) => {
                                    let raw = spn_raw.ok_or_else(|| {
                                        Error::Config("predicted switches requested without an SPN".into())
                                    })?;
                                    Rc::new(switches::classify_tensor(tape.value(raw))?)
                                }
                                None => {
                                    return Err(Error::Config(format!(
                                        "{} decoding needs first-level switches",
                                        self.variant
                                    )))
                                }
                            };
                            if sw.len() != tape.value(f).len() {
                                return Err(Error::Shape(format!(
                                    "{} switches for a feature of {} values",
                                    sw.len(),
                                    tape.value(f).len()
                                )));
                            }
                            used_switches = Some(Rc::clone(&sw));
                            tape.unpool2x2(f, sw)
                        }
                    }
                }
                Stage::StridedDown(_) | Stage::PoolDown(_) => unreachable!("decoder has no down stages"),
            };
            trace.push(h);
        }
        // Encoder order: finest level first.
        features.reverse();
        Ok(DecoderOutput { image: h, features, spn_raw, used_switches, trace })
    }
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    spec: NetworkSpec,
    blocks: Vec<ConvBlock>,
    params: ParamStore,
}

impl Discriminator {
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        if spec.role != NetworkRole::Discriminator {
            return Err(Error::Spec(format!("expected a discriminator spec, got {:?}", spec.role)));
        }
        let mut params = ParamStore::new();
        let mut rng = rng_for(seed, spec.role);
        let mut b = BlockBuilder { store: &mut params, rng: &mut rng };
        let mut c = spec.input_channels;
        let mut blocks = Vec::new();
        for (i, l) in spec.layers.iter().enumerate() {
            let stride = if l.stride == Stride::Two { 2 } else { 1 };
            blocks.push(b.block(&format!("disc.{i}"), c, l, stride));
            c = l.filters;
        }
        Ok(Self { spec: spec.clone(), blocks, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Patch scores in `(0, 1)`, `[N, 1, n, n]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Var {
        self.blocks.iter().fold(x, |h, b| b.forward(tape, p, h))
    }
}

/// A built network of any role.
#[derive(Clone, Debug)]
pub enum Network {
    Encoder(Encoder),
    Decoder(Decoder),
    Discriminator(Discriminator),
    Spn(Spn),
}

/// Build the network a spec describes. Decoders built here assume the
/// mirror channels of their own up layers; `latent_scale` defaults to the
/// default center table's range.
pub fn build_network(net: &NetworkSpec, variant: &str, seed: u64) -> Result<Network> {
    let variant: Variant = variant.parse()?;
    Ok(match net.role {
        NetworkRole::Encoder => Network::Encoder(Encoder::build(net, variant, 2.0, seed)?),
        NetworkRole::Decoder => {
            let mut pooled = net.up_filters();
            pooled.reverse();
            Network::Decoder(Decoder::build(net, variant, &pooled, seed)?)
        }
        NetworkRole::Discriminator => Network::Discriminator(Discriminator::build(net, seed)?),
        NetworkRole::Spn => Network::Spn(Spn::build(net.input_channels, seed)?),
    })
}

pub(crate) fn spn_rng(seed: u64) -> ChaCha8Rng {
    rng_for(seed, NetworkRole::Spn)
}
