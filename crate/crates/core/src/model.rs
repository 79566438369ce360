//! The full model: configuration plus encoder, decoder, optional SPN and
//! discriminator.

use std::rc::Rc;

use autograd::{ParamStore, Tape, Tensor};
use sha2::{Digest, Sha256};

use crate::archspec::{Decoder, Discriminator, Encoder, NetworkSpec, ShapeTriple, SwitchSource, DOWNSAMPLING};
use crate::config::{ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::grid::{Grid, ImageTensor};
use crate::quantizer::{self, LatentCode};
use crate::switches::{Spn, SwitchMap};

#[derive(Clone, Debug)]
pub struct CompressNet {
    config: ModelConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub spn: Option<Spn>,
    pub discriminator: Discriminator,
}

/// Encoder-side result for one image.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub code: LatentCode,
    /// First-level switches, recorded for the stacked variants.
    pub first_switches: Option<SwitchMap>,
}

impl CompressNet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let enc_spec = NetworkSpec::encoder(&config.encoder_arch, config.latent_channels)?;
        let dec_spec = NetworkSpec::decoder(&config.decoder_arch, config.latent_channels)?;
        let disc_spec = NetworkSpec::discriminator(&config.disc_arch)?;
        let seed = config.init_seed;
        let encoder = Encoder::build(&enc_spec, config.variant, config.centers.max_abs(), seed)?;
        let decoder = Decoder::build(&dec_spec, config.variant, &enc_spec.pooled_channels(), seed)?;
        let spn = match config.variant {
            Variant::SaeSpn => {
                let channels = decoder.first_level_channels().expect("decoder has up layers");
                Some(Spn::build(channels, seed)?)
            }
            _ => None,
        };
        let discriminator = Discriminator::build(&disc_spec, seed)?;
        Ok(Self { config, encoder, decoder, spn, discriminator })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Parameter stores in a fixed order: encoder, decoder, SPN (if any),
    /// discriminator.
    pub fn stores(&self) -> Vec<&ParamStore> {
        let mut out = vec![self.encoder.params(), self.decoder.params()];
        if let Some(spn) = &self.spn {
            out.push(spn.params());
        }
        out.push(self.discriminator.params());
        out
    }

    pub fn stores_mut(&mut self) -> Vec<&mut ParamStore> {
        let mut out = vec![self.encoder.params_mut(), self.decoder.params_mut()];
        if let Some(spn) = &mut self.spn {
            out.push(spn.params_mut());
        }
        out.push(self.discriminator.params_mut());
        out
    }

    /// SHA-256 over the canonical config and every inference-time weight.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.config.canonical().as_bytes());
        let mut stores = vec![self.encoder.params(), self.decoder.params()];
        if let Some(spn) = &self.spn {
            stores.push(spn.params());
        }
        for store in stores {
            for (name, t) in store.iter() {
                h.update(name.as_bytes());
                for v in t.data() {
                    h.update(v.to_le_bytes());
                }
            }
        }
        h.finalize().into()
    }

    fn check_image(&self, img: &ImageTensor) -> Result<()> {
        if img.channels() != 3 {
            return Err(Error::Shape(format!("expected a colour image, got {} channels", img.channels())));
        }
        if !img.height().is_multiple_of(DOWNSAMPLING) || !img.width().is_multiple_of(DOWNSAMPLING) || img.height() == 0 || img.width() == 0
        {
            return Err(Error::Shape(format!(
                "image {}x{} not divisible by {DOWNSAMPLING}",
                img.height(),
                img.width()
            )));
        }
        Ok(())
    }

    /// Run the encoder and quantize.
    pub fn encode(&self, img: &ImageTensor) -> Result<Encoded> {
        self.check_image(img)?;
        let mut tape = Tape::new();
        let p = self.encoder.params().bind(&mut tape, false);
        let x = tape.constant(img.to_nchw());
        let out = self.encoder.forward(&mut tape, &p, x);
        let latent = Grid::from_nchw(tape.value(out.latent), 0);
        let source = ShapeTriple::new(img.height(), img.width(), img.channels());
        let code = quantizer::quantize(&latent, &self.config.centers, source)?;
        let first_switches = match out.levels.first() {
            Some(level) => {
                let (_, c, h, w) = tape.value(level.pooled).dims4();
                Some(SwitchMap::from_nchw_order(&level.switches, c, h, w)?)
            }
            None => None,
        };
        Ok(Encoded { code, first_switches })
    }

    /// Reconstruct from a latent code. `switches` is required for SWWAE and
    /// ignored otherwise.
    pub fn decode(&self, code: &LatentCode, switches: Option<&SwitchMap>) -> Result<ImageTensor> {
        let (h, w, c) = code.indices.dims();
        if c != self.config.latent_channels {
            return Err(Error::Shape(format!(
                "latent has {c} channels, model expects {}",
                self.config.latent_channels
            )));
        }
        if code.source_shape.height != h * DOWNSAMPLING || code.source_shape.width != w * DOWNSAMPLING {
            return Err(Error::Shape(format!("latent {h}x{w} does not match source {}", code.source_shape)));
        }
        let latent = quantizer::dequantize(code)?;
        let mut tape = Tape::new();
        let p = self.decoder.params().bind(&mut tape, false);
        let spn = self.spn.as_ref().map(|s| (s, s.params().bind(&mut tape, false)));
        let z = tape.constant(latent.to_nchw());
        let source = match self.config.variant {
            Variant::Swwae => {
                let sw = switches.ok_or_else(|| Error::Config("swwae decoding needs transmitted switches".into()))?;
                Some(SwitchSource::Given(Rc::new(sw.to_nchw_order())))
            }
            Variant::SaeSpn => Some(SwitchSource::Predicted),
            Variant::Plain | Variant::SaeAll => None,
        };
        let out = self.decoder.forward(&mut tape, &p, z, source.as_ref(), spn.as_ref().map(|(s, b)| (*s, b)))?;
        let img = tape.value(out.image);
        if !img.all_finite() {
            return Err(Error::Numeric("decoder produced non-finite values".into()));
        }
        ImageTensor::new(Grid::from_nchw(img, 0))
    }

    /// Encode, quantize and decode (with the variant's own switch source).
    pub fn reconstruct(&self, img: &ImageTensor) -> Result<ImageTensor> {
        let enc = self.encode(img)?;
        self.decode(&enc.code, enc.first_switches.as_ref())
    }

    /// Channels of the first pooling level (the switch map depth).
    pub fn first_level_channels(&self) -> Option<usize> {
        self.encoder.spec().pooled_channels().first().copied().filter(|_| self.variant().is_stacked())
    }

    /// Number of first-level switches for an image of the given size.
    pub fn switch_count(&self, height: usize, width: usize) -> usize {
        self.first_level_channels().map_or(0, |c| c * (height / 2) * (width / 2))
    }

    /// Parameter values of every store, in [`CompressNet::stores`] order.
    pub fn export_params(&self) -> Vec<Vec<Tensor>> {
        self.stores().iter().map(|s| s.iter().map(|(_, t)| t.clone()).collect()).collect()
    }

    pub fn import_params(&mut self, values: Vec<Vec<Tensor>>) -> Result<()> {
        let mut stores = self.stores_mut();
        if values.len() != stores.len() {
            return Err(Error::Corruption(format!("{} parameter groups, model has {}", values.len(), stores.len())));
        }
        for (store, group) in stores.iter_mut().zip(values) {
            store.load(group).map_err(Error::Corruption)?;
        }
        Ok(())
    }
}
