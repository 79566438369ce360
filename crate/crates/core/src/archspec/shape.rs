//! Network specifications and static shape inference.

use std::fmt;

use super::layers::{parse_arch, Activation, LayerKind, LayerSpec, Stride};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ShapeTriple {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ShapeTriple {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels }
    }
}

impl fmt::Display for ShapeTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NetworkRole {
    Encoder,
    Decoder,
    Discriminator,
    Spn,
}

/// Spatial downsampling of the encoder (and upsampling of the decoder).
pub const DOWNSAMPLING: usize = 16;
const LEVELS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub role: NetworkRole,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
}

fn count(layers: &[LayerSpec], kind: LayerKind) -> usize {
    layers.iter().filter(|l| l.kind == kind).count()
}

impl NetworkSpec {
    /// Encoder from an architecture string plus the `c3s1-C` tanh projection
    /// onto the latent channels.
    pub fn encoder(arch: &str, latent_channels: usize) -> Result<Self> {
        let mut layers = parse_arch(arch)?;
        if count(&layers, LayerKind::Down) != LEVELS {
            return Err(Error::Spec(format!("encoder needs exactly {LEVELS} down layers")));
        }
        if layers.iter().any(|l| {
            matches!(l.kind, LayerKind::Up | LayerKind::DiscConv)
                || l.stride != Stride::One && l.kind != LayerKind::Down
        }) {
            return Err(Error::Spec("encoder accepts only c<k>s1, d and R layers".into()));
        }
        layers.push(LayerSpec::conv_final(3, latent_channels, Activation::Tanh));
        let spec = Self { role: NetworkRole::Encoder, input_channels: 3, layers };
        spec.check_channels()?;
        Ok(spec)
    }

    /// Decoder from an architecture string; the trailing convolution becomes
    /// the sigmoid image output.
    pub fn decoder(arch: &str, latent_channels: usize) -> Result<Self> {
        let mut layers = parse_arch(arch)?;
        if count(&layers, LayerKind::Up) != LEVELS {
            return Err(Error::Spec(format!("decoder needs exactly {LEVELS} up layers")));
        }
        if layers.iter().any(|l| matches!(l.kind, LayerKind::Down | LayerKind::DiscConv) || l.stride == Stride::Two) {
            return Err(Error::Spec("decoder accepts only c<k>s1, R and u layers".into()));
        }
        let last = layers.last_mut().expect("non-empty after parse");
        if last.kind != LayerKind::Conv || last.filters != 3 {
            return Err(Error::Spec("decoder must end with a 3-filter convolution".into()));
        }
        *last = LayerSpec::conv_final(last.kernel, 3, Activation::Sigmoid);
        let spec = Self { role: NetworkRole::Decoder, input_channels: latent_channels, layers };
        spec.check_channels()?;
        Ok(spec)
    }

    /// PatchGAN discriminator; the final layer emits sigmoid scores.
    pub fn discriminator(arch: &str) -> Result<Self> {
        let mut layers = parse_arch(arch)?;
        if layers.iter().any(|l| l.kind != LayerKind::DiscConv) {
            return Err(Error::Spec("discriminator accepts only c<k>s<s>p<p> layers".into()));
        }
        let last = layers.last_mut().expect("non-empty after parse");
        if last.filters != 1 {
            return Err(Error::Spec("discriminator must end with a 1-filter layer".into()));
        }
        last.activation = Activation::Sigmoid;
        Ok(Self { role: NetworkRole::Discriminator, input_channels: 3, layers })
    }

    /// Single 3×3 sigmoid convolution over first-level decoder features.
    pub fn spn(channels: usize) -> Self {
        Self {
            role: NetworkRole::Spn,
            input_channels: channels,
            layers: vec![LayerSpec::conv_final(3, channels, Activation::Sigmoid)],
        }
    }

    fn check_channels(&self) -> Result<()> {
        let mut c = self.input_channels;
        for (i, l) in self.layers.iter().enumerate() {
            if l.kind == LayerKind::Residual && l.filters != c {
                return Err(Error::Spec(format!(
                    "channel mismatch at layer {}: residual block R{} receives {c} channels",
                    i + 1,
                    l.filters
                )));
            }
            c = l.filters;
        }
        Ok(())
    }

    /// Channel count entering each down layer, in encoder order.
    pub fn pooled_channels(&self) -> Vec<usize> {
        let mut c = self.input_channels;
        let mut out = Vec::new();
        for l in &self.layers {
            if l.kind == LayerKind::Down {
                out.push(c);
            }
            c = l.filters;
        }
        out
    }

    /// Filters of each up layer, in decoder order (deepest level first).
    pub fn up_filters(&self) -> Vec<usize> {
        self.layers.iter().filter(|l| l.kind == LayerKind::Up).map(|l| l.filters).collect()
    }

    pub fn output_channels(&self) -> usize {
        self.layers.last().map_or(self.input_channels, |l| l.filters)
    }

    fn spatial_factor(&self) -> usize {
        self.layers.iter().filter(|l| l.kind != LayerKind::DiscConv && l.stride == Stride::Two).fold(1, |f, _| f * 2)
    }
}

/// Output shape of every layer for the given input.
pub fn infer_shapes(net: &NetworkSpec, input: ShapeTriple) -> Result<Vec<ShapeTriple>> {
    if input.channels != net.input_channels {
        return Err(Error::Shape(format!(
            "{:?} expects {} input channels, got {}",
            net.role, net.input_channels, input.channels
        )));
    }
    if input.height == 0 || input.width == 0 {
        return Err(Error::Shape("empty input".into()));
    }
    let factor = net.spatial_factor();
    if !input.height.is_multiple_of(factor) || !input.width.is_multiple_of(factor) {
        return Err(Error::Shape(format!(
            "input {}x{} not divisible by the downsampling factor {factor}",
            input.height, input.width
        )));
    }
    let mut cur = input;
    let mut out = Vec::with_capacity(net.layers.len());
    for (i, l) in net.layers.iter().enumerate() {
        let (h, w) = match (l.kind, l.stride) {
            (LayerKind::DiscConv, s) => {
                let stride = if s == Stride::Two { 2 } else { 1 };
                let p = l.padding.amount();
                if cur.height + 2 * p < l.kernel || cur.width + 2 * p < l.kernel {
                    return Err(Error::Shape(format!(
                        "layer {} ({}): input {}x{} smaller than kernel",
                        i + 1,
                        l.render(),
                        cur.height,
                        cur.width
                    )));
                }
                ((cur.height + 2 * p - l.kernel) / stride + 1, (cur.width + 2 * p - l.kernel) / stride + 1)
            }
            (_, Stride::Two) => (cur.height / 2, cur.width / 2),
            (_, Stride::Half) => (cur.height * 2, cur.width * 2),
            (_, Stride::One) => (cur.height, cur.width),
        };
        cur = ShapeTriple::new(h, w, l.filters);
        out.push(cur);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{FULL_DECODER_ARCH, FULL_DISC_ARCH, FULL_ENCODER_ARCH};

    #[test]
    fn encoder_reaches_latent_shape() {
        let enc = NetworkSpec::encoder(FULL_ENCODER_ARCH, 8).unwrap();
        let shapes = infer_shapes(&enc, ShapeTriple::new(512, 512, 3)).unwrap();
        assert_eq!(*shapes.last().unwrap(), ShapeTriple::new(32, 32, 8));
        assert_eq!(shapes[0], ShapeTriple::new(512, 512, 60));
    }

    #[test]
    fn smallest_encoder_input() {
        let enc = NetworkSpec::encoder(FULL_ENCODER_ARCH, 4).unwrap();
        let shapes = infer_shapes(&enc, ShapeTriple::new(16, 16, 3)).unwrap();
        assert_eq!(*shapes.last().unwrap(), ShapeTriple::new(1, 1, 4));
        assert!(matches!(infer_shapes(&enc, ShapeTriple::new(24, 16, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn discriminator_patch_map() {
        let d = NetworkSpec::discriminator(FULL_DISC_ARCH).unwrap();
        let shapes = infer_shapes(&d, ShapeTriple::new(512, 512, 3)).unwrap();
        assert_eq!(*shapes.last().unwrap(), ShapeTriple::new(15, 15, 1));
        assert_eq!(d.layers.last().unwrap().activation, Activation::Sigmoid);
    }

    #[test]
    fn decoder_restores_image_shape() {
        let dec = NetworkSpec::decoder(FULL_DECODER_ARCH, 8).unwrap();
        let shapes = infer_shapes(&dec, ShapeTriple::new(32, 32, 8)).unwrap();
        assert_eq!(*shapes.last().unwrap(), ShapeTriple::new(512, 512, 3));
        for (l, s) in dec.layers.iter().zip(&shapes) {
            if l.kind == LayerKind::Residual {
                assert_eq!(*s, ShapeTriple::new(32, 32, 960));
            }
        }
    }

    #[test]
    fn residual_channel_mismatch() {
        assert!(matches!(NetworkSpec::decoder("c3s1-64, R32, u32, u16, u8, u8, c7s1-3", 4), Err(Error::Spec(_))));
    }

    #[test]
    fn role_constraints() {
        assert!(NetworkSpec::encoder("c7s1-8, d16, d32, d64", 4).is_err());
        assert!(NetworkSpec::decoder("c3s1-8, u8, u8, u8, u8, c7s1-4", 4).is_err());
        assert!(NetworkSpec::discriminator("c4s2p1-8, c3s1-1").is_err());
    }

    #[test]
    fn mirror_channels() {
        let enc = NetworkSpec::encoder(FULL_ENCODER_ARCH, 8).unwrap();
        let dec = NetworkSpec::decoder(FULL_DECODER_ARCH, 8).unwrap();
        let mut pooled = enc.pooled_channels();
        assert_eq!(pooled, vec![60, 120, 240, 480]);
        pooled.reverse();
        assert_eq!(dec.up_filters(), pooled);
    }
}
