//! Contrast-limited adaptive histogram equalization on luminance.

use crate::error::{Error, Result};
use crate::grid::{Grid, ImageTensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClaheParams {
    /// Tile grid `(rows, cols)`.
    pub tiles: (usize, usize),
    /// Histogram bin cap as a multiple of the uniform bin height.
    pub clip_limit: f64,
    pub bins: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self { tiles: (8, 8), clip_limit: 2.0, bins: 256 }
    }
}

impl ClaheParams {
    pub fn validate(&self) -> Result<()> {
        if self.tiles.0 == 0 || self.tiles.1 == 0 {
            return Err(Error::Config("CLAHE needs at least one tile per axis".into()));
        }
        if self.clip_limit.is_nan() || self.clip_limit < 1.0 {
            return Err(Error::Config(format!("CLAHE clip limit {} < 1", self.clip_limit)));
        }
        if self.bins < 2 {
            return Err(Error::Config("CLAHE needs at least 2 bins".into()));
        }
        Ok(())
    }
}

fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64) as usize).min(bins - 1)
}

/// Clipped, redistributed, normalized cumulative histogram of one tile.
fn tile_mapping(values: impl Iterator<Item = f64>, bins: usize, clip_limit: f64) -> Vec<f64> {
    let mut hist = vec![0.0; bins];
    let mut area = 0.0;
    for v in values {
        hist[bin_of(v, bins)] += 1.0;
        area += 1.0;
    }
    let cap = clip_limit * area / bins as f64;
    if cap.is_finite() {
        let mut excess = 0.0;
        for h in &mut hist {
            if *h > cap {
                excess += *h - cap;
                *h = cap;
            }
        }
        let share = excess / bins as f64;
        hist.iter_mut().for_each(|h| *h += share);
    }
    let mut acc = 0.0;
    hist.iter()
        .map(|h| {
            acc += h;
            (acc / area).min(1.0)
        })
        .collect()
}

/// CLAHE of a single `[0, 1]` plane.
fn clahe_plane(plane: &[f64], height: usize, width: usize, p: &ClaheParams) -> Result<Vec<f64>> {
    let (ty, tx) = p.tiles;
    let bound = |i: usize, n: usize, t: usize| i * n / t;
    for i in 0..ty {
        for j in 0..tx {
            let (h, w) =
                (bound(i + 1, height, ty) - bound(i, height, ty), bound(j + 1, width, tx) - bound(j, width, tx));
            if h < 2 || w < 2 {
                return Err(Error::Shape(format!(
                    "CLAHE tile {h}x{w} smaller than 2x2 ({height}x{width} in {ty}x{tx} tiles)"
                )));
            }
        }
    }
    let maps: Vec<Vec<f64>> = (0..ty * tx)
        .map(|t| {
            let (i, j) = (t / tx, t % tx);
            let (y0, y1) = (bound(i, height, ty), bound(i + 1, height, ty));
            let (x0, x1) = (bound(j, width, tx), bound(j + 1, width, tx));
            let values = (y0..y1).flat_map(move |y| (x0..x1).map(move |x| plane[y * width + x]));
            tile_mapping(values, p.bins, p.clip_limit)
        })
        .collect();
    let (th, tw) = (height as f64 / ty as f64, width as f64 / tx as f64);
    let neighbours = |pos: f64, size: f64, count: usize| -> (usize, usize, f64) {
        let f = (pos + 0.5) / size - 0.5;
        if f <= 0.0 {
            (0, 0, 0.0)
        } else if f >= (count - 1) as f64 {
            (count - 1, count - 1, 0.0)
        } else {
            let lo = f.floor() as usize;
            (lo, lo + 1, f - lo as f64)
        }
    };
    let mut out = vec![0.0; height * width];
    for y in 0..height {
        let (i0, i1, wy) = neighbours(y as f64, th, ty);
        for x in 0..width {
            let (j0, j1, wx) = neighbours(x as f64, tw, tx);
            let b = bin_of(plane[y * width + x], p.bins);
            let m = |i: usize, j: usize| maps[i * tx + j][b];
            let top = m(i0, j0) * (1.0 - wx) + m(i0, j1) * wx;
            let bottom = m(i1, j0) * (1.0 - wx) + m(i1, j1) * wx;
            out[y * width + x] = top * (1.0 - wy) + bottom * wy;
        }
    }
    Ok(out)
}

/// Equalize the luminance (YCbCr Y) and keep the chrominance.
pub fn clahe(image: &ImageTensor, p: &ClaheParams) -> Result<ImageTensor> {
    p.validate()?;
    let g = image.grid();
    let (h, w, c) = g.dims();
    if c == 1 {
        let out = clahe_plane(g.data(), h, w, p)?;
        return ImageTensor::new(Grid::new(h, w, 1, out)?);
    }
    let mut luma = Vec::with_capacity(h * w);
    let mut chroma = Vec::with_capacity(h * w);
    for px in g.data().chunks_exact(3) {
        let (r, gg, b) = (px[0], px[1], px[2]);
        let y = 0.299 * r + 0.587 * gg + 0.114 * b;
        luma.push(y);
        chroma.push(((b - y) * 0.564, (r - y) * 0.713));
    }
    let eq = clahe_plane(&luma, h, w, p)?;
    let mut data = Vec::with_capacity(h * w * 3);
    for (y, (cb, cr)) in eq.into_iter().zip(chroma) {
        let r = y + 1.403 * cr;
        let b = y + 1.773 * cb;
        let gg = y - 0.344 * cb - 0.714 * cr;
        data.extend([r, gg, b]);
    }
    Ok(ImageTensor::from_grid_clamped(Grid::new(h, w, 3, data)?))
}
