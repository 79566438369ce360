mod conv;
mod elementwise;
mod spatial;

pub use conv::{conv2d_forward, ConvGeom};
pub use spatial::{maxpool2x2_forward, unpool2x2_forward, SWITCH_OFFSETS};
