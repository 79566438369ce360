//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Values are recorded on a [`Tape`]; [`Tape::backward`] walks the tape in
//! reverse. Ops cover what a convolutional autoencoder/GAN needs: convolution,
//! instance norm, reflection padding, switch-recording max-pool and unpool,
//! pixel shuffle and the usual pointwise maps.

pub mod gradcheck;
pub mod init;
pub mod ops;
pub mod optim;
mod params;
mod tape;
mod tensor;

pub use optim::{Adam, Sgd};
pub use params::{Bound, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
