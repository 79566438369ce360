//! Channel-last grids and the image type built on them.

use std::path::Path;

use autograd::Tensor;

use crate::error::{Error, Result};

/// `height × width × channels` values, row-major with the channel index
/// varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} grid needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        Self { height, width, channels, data: vec![value; height * width * channels] }
    }

    pub fn from_fn(height: usize, width: usize, channels: usize, f: impl Fn(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self { height, width, channels, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[self.index(y, x, c)]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: T) {
        let i = self.index(y, x, c);
        self.data[i] = v;
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// One channel as a `height × width` plane.
    pub fn plane(&self, c: usize) -> Vec<T> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }
}

impl Grid<f64> {
    /// `[1, C, H, W]` tensor.
    pub fn to_nchw(&self) -> Tensor {
        let (h, w, c) = self.dims();
        let mut out = vec![0.0; h * w * c];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    out[(ch * h + y) * w + x] = self.data[(y * w + x) * c + ch];
                }
            }
        }
        Tensor::from_vec(&[1, c, h, w], out)
    }

    /// Sample `n` of an NCHW tensor.
    pub fn from_nchw(t: &Tensor, n: usize) -> Self {
        let (_, c, h, w) = t.dims4();
        let src = t.sample(n);
        Grid::from_fn(h, w, c, |y, x, ch| src[(ch * h + y) * w + x])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Grid<u8> {
    /// `[1, C, H, W]` ordering of the values.
    pub fn to_nchw_order(&self) -> Vec<u8> {
        let (h, w, c) = self.dims();
        let mut out = vec![0; h * w * c];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    out[(ch * h + y) * w + x] = self.data[(y * w + x) * c + ch];
                }
            }
        }
        out
    }

    /// Inverse of [`Grid::to_nchw_order`] for one sample.
    pub fn from_nchw_order(values: &[u8], c: usize, h: usize, w: usize) -> Self {
        Grid::from_fn(h, w, c, |y, x, ch| values[(ch * h + y) * w + x])
    }
}

/// An `H × W × C` image with values in `[0, 1]` (C is 3 for colour, 1 for grey).
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor(Grid<f64>);

impl ImageTensor {
    pub fn new(grid: Grid<f64>) -> Result<Self> {
        if grid.channels() != 3 && grid.channels() != 1 {
            return Err(Error::Shape(format!("images have 1 or 3 channels, got {}", grid.channels())));
        }
        if let Some(v) = grid.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self(grid))
    }

    /// Clamp into `[0, 1]` instead of rejecting.
    pub fn from_grid_clamped(grid: Grid<f64>) -> Self {
        Self(grid.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }))
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        Self::from_grid_clamped(Grid::from_fn(height, width, 3, f))
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<f64> {
        self.0
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn channels(&self) -> usize {
        self.0.channels()
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn to_nchw(&self) -> Tensor {
        self.0.to_nchw()
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?.to_rgb8();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect();
        Ok(Self(Grid::new(h as usize, w as usize, 3, data)?))
    }

    /// 8-bit RGB (or grey) PNG, values rounded to the nearest level.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes: Vec<u8> = self.0.data().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
        let (w, h) = (self.width() as u32, self.height() as u32);
        let color = if self.channels() == 3 { image::ColorType::Rgb8 } else { image::ColorType::L8 };
        image::save_buffer(path.as_ref(), &bytes, w, h, color)?;
        Ok(())
    }

    /// Quantized to 8 bits, matching a PNG round trip.
    pub fn quantized_8bit(&self) -> Self {
        Self(self.0.map(|v| (v * 255.0).round().clamp(0.0, 255.0) / 255.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nchw_round_trip() {
        let g = Grid::from_fn(3, 4, 2, |y, x, c| (y * 100 + x * 10 + c) as f64);
        let t = g.to_nchw();
        assert_eq!(t.shape(), &[1, 2, 3, 4]);
        assert_eq!(t.data()[12 + 5], g.get(1, 1, 1));
        assert_eq!(Grid::from_nchw(&t, 0), g);
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        let g = Grid::filled(2, 2, 3, 1.5);
        assert!(matches!(ImageTensor::new(g), Err(Error::Domain(_))));
    }

    #[test]
    fn png_round_trip_is_8bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let img = ImageTensor::from_fn(5, 7, |y, x, c| ((y * 7 + x) * 3 + c) as f64 / 105.0);
        img.save_png(&p).unwrap();
        assert_eq!(ImageTensor::load_png(&p).unwrap(), img.quantized_8bit());
    }
}
