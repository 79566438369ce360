//! `.cnet` container. All integers little-endian.
//!
//! ```text
//! "CNET" | version u8 | variant u8 | height u16 | width u16 | C u8 | L u8
//! | L × center f32 | model digest [32] | payload_len u32 | payload
//! | (swwae only) switch_count u32 | switch payload
//! ```

use crate::archspec::DOWNSAMPLING;
use crate::config::Variant;
use crate::error::{Error, Result};
use crate::quantizer::CenterTable;

use super::packing::GroupLayout;

pub const MAGIC: &[u8; 4] = b"CNET";
pub const VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub version: u8,
    pub variant: Variant,
    pub height: u16,
    pub width: u16,
    pub channels: u8,
    pub centers: CenterTable,
    pub model_digest: [u8; 32],
}

impl Header {
    pub fn latent_dims(&self) -> (usize, usize, usize) {
        (usize::from(self.height) / DOWNSAMPLING, usize::from(self.width) / DOWNSAMPLING, usize::from(self.channels))
    }

    pub fn symbol_count(&self) -> usize {
        let (h, w, c) = self.latent_dims();
        h * w * c
    }

    pub fn pixels(&self) -> usize {
        usize::from(self.height) * usize::from(self.width)
    }

    pub fn encoded_len(&self) -> usize {
        4 + 1 + 1 + 2 + 2 + 1 + 1 + 4 * self.centers.len() + 32
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedBitstream {
    pub header: Header,
    pub payload: Vec<u8>,
    /// `(count, packed bytes)` of the first-level switches (SWWAE only).
    pub switches: Option<(u32, Vec<u8>)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Corruption(format!("truncated bitstream: {what} needs {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

impl CompressedBitstream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(h.encoded_len() + 8 + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.push(h.version);
        out.push(h.variant.code());
        out.extend_from_slice(&h.height.to_le_bytes());
        out.extend_from_slice(&h.width.to_le_bytes());
        out.push(h.channels);
        out.push(h.centers.len() as u8);
        for c in h.centers.values() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&h.model_digest);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        if let Some((count, bytes)) = &self.switches {
            out.extend_from_slice(&count.to_le_bytes());
            out.extend_from_slice(bytes);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Corruption("bad magic (not a .cnet bitstream)".into()));
        }
        let version = r.u8("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let variant = Variant::from_code(r.u8("variant")?)?;
        let height = r.u16("height")?;
        let width = r.u16("width")?;
        for (name, v) in [("height", height), ("width", width)] {
            if v == 0 || usize::from(v) % DOWNSAMPLING != 0 {
                return Err(Error::Corruption(format!("{name} {v} is not a positive multiple of {DOWNSAMPLING}")));
            }
        }
        let channels = r.u8("channels")?;
        if channels == 0 {
            return Err(Error::Corruption("zero latent channels".into()));
        }
        let levels = usize::from(r.u8("levels")?);
        let raw = r.take(4 * levels, "center table")?;
        let centers = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        let centers = CenterTable::new(centers).map_err(|e| Error::Corruption(format!("center table: {e}")))?;
        let model_digest: [u8; 32] = r.take(32, "model digest")?.try_into().expect("32 bytes");
        let header = Header { version, variant, height, width, channels, centers, model_digest };

        let payload_len = r.u32("payload length")? as usize;
        let expected = GroupLayout::for_levels(levels)?.payload_len(header.symbol_count());
        if payload_len != expected {
            return Err(Error::Corruption(format!("payload length {payload_len}, header implies {expected}")));
        }
        let payload = r.take(payload_len, "payload")?.to_vec();
        let switches = if variant == Variant::Swwae {
            let count = r.u32("switch count")?;
            let len = GroupLayout::for_levels(4)?.payload_len(count as usize);
            Some((count, r.take(len, "switch payload")?.to_vec()))
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(Error::Corruption(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { header, payload, switches })
    }

    pub fn byte_len(&self) -> usize {
        self.header.encoded_len() + 4 + self.payload.len() + self.switches.as_ref().map_or(0, |(_, b)| 4 + b.len())
    }
}
