//! Layer notation, network specifications, shape inference and the
//! differentiable networks built from them.

pub mod build;
mod layers;
mod shape;

pub use build::{
    build_network, Decoder, DecoderOutput, Discriminator, Encoder, EncoderOutput, Network, PoolLevel, SwitchSource,
};
pub use layers::{
    parse_arch, render_arch, Activation, LayerKind, LayerSpec, Norm, Padding, Stride, INSTANCE_NORM_EPS, LEAKY_SLOPE,
};
pub use shape::{infer_shapes, NetworkRole, NetworkSpec, ShapeTriple, DOWNSAMPLING};
