//! Bitstream codec: fixed-rate symbol packing, the `.cnet` container and
//! the compress/decompress pipeline.

mod bitstream;
mod packing;
mod pipeline;

pub use bitstream::{CompressedBitstream, Header, MAGIC, VERSION};
pub use packing::{pack_switches, pack_symbols, unpack_switches, unpack_symbols, GroupLayout};
pub use pipeline::{bpp, compress, decompress, read_code, RateReport};
