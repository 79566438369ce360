use crate::archspec::{ShapeTriple, DOWNSAMPLING};
use crate::config::{ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::grid::{Grid, ImageTensor};
use crate::model::CompressNet;
use crate::quantizer::LatentCode;
use crate::switches::SwitchMap;

use super::bitstream::{CompressedBitstream, Header, VERSION};
use super::packing::{pack_switches, pack_symbols, unpack_switches, unpack_symbols};

/// Nominal bitrate `(H/16 · W/16 · C · log2 L) / (H · W)`.
pub fn bpp(height: usize, width: usize, channels: usize, levels: usize) -> Result<f64> {
    if height == 0 || width == 0 || !height.is_multiple_of(DOWNSAMPLING) || !width.is_multiple_of(DOWNSAMPLING) {
        return Err(Error::Shape(format!("{height}x{width} is not a positive multiple of {DOWNSAMPLING}")));
    }
    if channels == 0 || levels == 0 {
        return Err(Error::Config("C and L must be at least 1".into()));
    }
    let symbols = (height / DOWNSAMPLING) * (width / DOWNSAMPLING) * channels;
    Ok(symbols as f64 * (levels as f64).log2() / (height * width) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateReport {
    pub theoretical_bpp: f64,
    /// Every byte of the container, header and side channel included.
    pub container_bpp: f64,
    /// Transmitted switches at 2 bits each.
    pub side_channel_bpp: f64,
}

impl RateReport {
    pub fn of(bs: &CompressedBitstream) -> Result<Self> {
        let h = &bs.header;
        let pixels = h.pixels() as f64;
        Ok(Self {
            theoretical_bpp: bpp(h.height.into(), h.width.into(), h.channels.into(), h.centers.len())?,
            container_bpp: (bs.byte_len() * 8) as f64 / pixels,
            side_channel_bpp: bs.switches.as_ref().map_or(0.0, |(n, _)| f64::from(*n) * 2.0 / pixels),
        })
    }
}

fn hex(d: &[u8; 32]) -> String {
    hex::encode(d)
}

/// Encode an image into a bitstream. `config` must describe `model`.
pub fn compress(
    img: &ImageTensor,
    model: &CompressNet,
    config: &ModelConfig,
) -> Result<(CompressedBitstream, RateReport)> {
    if config.digest() != model.config().digest() {
        return Err(Error::DigestMismatch { expected: hex(&config.digest()), found: hex(&model.config().digest()) });
    }
    let (height, width) = (img.height(), img.width());
    if height > usize::from(u16::MAX) || width > usize::from(u16::MAX) {
        return Err(Error::Shape(format!("{height}x{width} exceeds the 16-bit header fields")));
    }
    let encoded = model.encode(img)?;
    let symbols = encoded.code.indices.to_nchw_order();
    let payload = pack_symbols(&symbols, config.centers.len())?;
    let switches = match (config.variant, &encoded.first_switches) {
        (Variant::Swwae, Some(map)) => {
            let order = map.to_nchw_order();
            let count = u32::try_from(order.len()).map_err(|_| Error::Shape("switch map too large".into()))?;
            Some((count, pack_switches(&order)?))
        }
        (Variant::Swwae, None) => unreachable!("stacked encoders always record switches"),
        _ => None,
    };
    let header = Header {
        version: VERSION,
        variant: config.variant,
        height: height as u16,
        width: width as u16,
        channels: config.latent_channels as u8,
        centers: config.centers.clone(),
        model_digest: model.digest(),
    };
    let bs = CompressedBitstream { header, payload, switches };
    let report = RateReport::of(&bs)?;
    Ok((bs, report))
}

/// Latent code (and SWWAE switches) carried by a bitstream.
pub fn read_code(bs: &CompressedBitstream, model: &CompressNet) -> Result<(LatentCode, Option<SwitchMap>)> {
    let h = &bs.header;
    let digest = model.digest();
    if h.model_digest != digest {
        return Err(Error::DigestMismatch { expected: hex(&h.model_digest), found: hex(&digest) });
    }
    if h.variant != model.variant() || usize::from(h.channels) != model.config().latent_channels {
        return Err(Error::Corruption("header disagrees with the model configuration".into()));
    }
    let (lh, lw, lc) = h.latent_dims();
    let symbols = unpack_symbols(&bs.payload, h.symbol_count(), h.centers.len())?;
    let code = LatentCode {
        indices: Grid::from_nchw_order(&symbols, lc, lh, lw),
        table: h.centers.clone(),
        source_shape: ShapeTriple::new(h.height.into(), h.width.into(), 3),
    };
    code.validate()?;
    let switches = match &bs.switches {
        Some((count, bytes)) => {
            let (height, width) = (usize::from(h.height), usize::from(h.width));
            let expected = model.switch_count(height, width);
            if *count as usize != expected {
                return Err(Error::Corruption(format!("{count} switches, model expects {expected}")));
            }
            let values = unpack_switches(bytes, expected)?;
            let channels = model.first_level_channels().expect("swwae is stacked");
            Some(SwitchMap::from_nchw_order(&values, channels, height / 2, width / 2)?)
        }
        None => None,
    };
    Ok((code, switches))
}

pub fn decompress(bs: &CompressedBitstream, model: &CompressNet) -> Result<ImageTensor> {
    let (code, switches) = read_code(bs, model)?;
    model.decode(&code, switches.as_ref())
}
