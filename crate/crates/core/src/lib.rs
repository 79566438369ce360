//! Generative image compression at extremely low bitrates.
//!
//! An encoder maps an image to an `H/16 × W/16 × C` latent that is hard
//! quantized onto `L` centers and packed into a small bitstream; a decoder
//! (generator) trained against a PatchGAN discriminator reconstructs the
//! image. Stacked-autoencoder variants add mirrored layer-wise losses and
//! either transmit first-level pooling switches or predict them.

// `!(x > 0.0)` style checks reject NaN on purpose; grid loops index by coordinate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod archspec;
pub mod codec;
pub mod config;
pub mod data;
mod error;
pub mod grid;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod quantizer;
pub mod switches;
pub mod train;

pub use config::{KeyValues, ModelConfig, Variant};
pub use error::{Error, Result};
pub use grid::{Grid, ImageTensor};
pub use model::CompressNet;
