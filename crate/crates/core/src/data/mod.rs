//! Training data: image loading, patch extraction with flips, CLAHE.

mod clahe;
mod synthetic;

pub use clahe::{clahe, ClaheParams};
pub use synthetic::{synthetic_corpus, synthetic_image, CORPUS_SIDE, CORPUS_SIZE};

use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::archspec::DOWNSAMPLING;
use crate::error::{Error, Result};
use crate::grid::{Grid, ImageTensor};

/// Uniformly random `size × size` crop, horizontally flipped with
/// probability `flip_prob`. `None` (with a warning) when the image is
/// smaller than the patch.
pub fn sample_patch(image: &ImageTensor, size: usize, flip_prob: f64, rng: &mut impl Rng) -> Option<ImageTensor> {
    let (h, w, c) = image.grid().dims();
    if h < size || w < size {
        warn!("skipping {h}x{w} image: smaller than {size}x{size} patch");
        return None;
    }
    let y0 = rng.random_range(0..=h - size);
    let x0 = rng.random_range(0..=w - size);
    let flip = rng.random_bool(flip_prob.clamp(0.0, 1.0));
    let g = image.grid();
    let patch = Grid::from_fn(size, size, c, |y, x, ch| {
        let sx = if flip { size - 1 - x } else { x };
        g.get(y0 + y, x0 + sx, ch)
    });
    Some(ImageTensor::new(patch).expect("crop of a valid image"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub patch_size: usize,
    pub num_patches: usize,
    pub flip_prob: f64,
    pub seed: u64,
    pub clahe: Option<ClaheParams>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { patch_size: 512, num_patches: 16, flip_prob: 0.5, seed: 0, clahe: None }
    }
}

/// A fixed set of patches drawn once from the source images, cycling
/// through the images in order.
#[derive(Clone, Debug)]
pub struct PatchDataset {
    patches: Vec<ImageTensor>,
}

impl PatchDataset {
    pub fn new(images: &[ImageTensor], cfg: &DataConfig) -> Result<Self> {
        if cfg.patch_size == 0 || !cfg.patch_size.is_multiple_of(DOWNSAMPLING) {
            return Err(Error::Config(format!(
                "patch_size {} is not a positive multiple of {DOWNSAMPLING}",
                cfg.patch_size
            )));
        }
        if !(0.0..=1.0).contains(&cfg.flip_prob) {
            return Err(Error::Config(format!("flip_prob {} outside [0, 1]", cfg.flip_prob)));
        }
        let sources = match &cfg.clahe {
            Some(p) => images.iter().map(|img| clahe(img, p)).collect::<Result<Vec<_>>>()?,
            None => images.to_vec(),
        };
        let usable: Vec<&ImageTensor> = sources
            .iter()
            .filter(|img| img.height() >= cfg.patch_size && img.width() >= cfg.patch_size && img.channels() == 3)
            .collect();
        if usable.is_empty() {
            return Err(Error::Config(format!("no colour image is at least {0}x{0}", cfg.patch_size)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let patches = (0..cfg.num_patches)
            .map(|i| sample_patch(usable[i % usable.len()], cfg.patch_size, cfg.flip_prob, &mut rng).expect("filtered"))
            .collect();
        Ok(Self { patches })
    }

    pub fn patches(&self) -> &[ImageTensor] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Shuffled batches of patch indices for one epoch.
    pub fn batches(&self, batch: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.patches.len()).collect();
        order.shuffle(rng);
        order.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
    }
}

/// PNG images of a directory, sorted by file name.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, ImageTensor)>> {
    let mut entries: Vec<_> = std::fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    entries.sort();
    entries
        .into_iter()
        .map(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, ImageTensor::load_png(&p)?))
        })
        .collect()
}

/// Write the synthetic corpus as `synth_00.png` … into `dir`.
pub fn write_synthetic_corpus(dir: impl AsRef<Path>) -> Result<()> {
    std::fs::create_dir_all(dir.as_ref())?;
    for (i, img) in synthetic_corpus().iter().enumerate() {
        img.save_png(dir.as_ref().join(format!("synth_{i:02}.png")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_has_requested_size() {
        let img = ImageTensor::from_fn(40, 72, |y, x, c| ((y + x + c) % 10) as f64 / 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = sample_patch(&img, 32, 0.5, &mut rng).unwrap();
        assert_eq!(p.grid().dims(), (32, 32, 3));
        assert!(sample_patch(&img, 48, 0.5, &mut rng).is_none());
    }

    #[test]
    fn flip_mirrors_columns() {
        let img = ImageTensor::from_fn(16, 16, |_, x, _| x as f64 / 15.0);
        let p = sample_patch(&img, 16, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(p.grid().get(0, 0, 0), 1.0);
    }

    #[test]
    fn dataset_is_deterministic() {
        let corpus = synthetic_corpus();
        let cfg = DataConfig { patch_size: 64, num_patches: 16, seed: 9, ..Default::default() };
        let a = PatchDataset::new(&corpus, &cfg).unwrap();
        let b = PatchDataset::new(&corpus, &cfg).unwrap();
        assert_eq!(a.patches(), b.patches());
        assert!(PatchDataset::new(&corpus, &DataConfig { patch_size: 60, ..cfg }).is_err());
    }

    #[test]
    fn corpus_shape() {
        let c = synthetic_corpus();
        assert_eq!(c.len(), 16);
        assert!(c.iter().all(|i| i.grid().dims() == (128, 128, 3)));
        assert_ne!(c[0], c[4]);
    }
}
