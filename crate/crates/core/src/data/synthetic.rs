//! Deterministic synthetic corpus: gradients, checkerboards, smooth noise
//! textures and blends of them.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::ImageTensor;

pub const CORPUS_SIZE: usize = 16;
pub const CORPUS_SIDE: usize = 128;

fn colour(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)]
}

fn gradient(rng: &mut ChaCha8Rng, side: usize) -> impl Fn(usize, usize, usize) -> f64 {
    let (a, b) = (colour(rng), colour(rng));
    let angle = rng.random_range(0.0..TAU);
    let (s, c) = angle.sin_cos();
    let n = side as f64;
    move |y, x, ch| {
        let t = ((x as f64 / n - 0.5) * c + (y as f64 / n - 0.5) * s) / std::f64::consts::SQRT_2 + 0.5;
        a[ch] + (b[ch] - a[ch]) * t
    }
}

fn checkerboard(rng: &mut ChaCha8Rng) -> impl Fn(usize, usize, usize) -> f64 {
    let (a, b) = (colour(rng), colour(rng));
    let cell = [4usize, 8, 16, 32][rng.random_range(0..4)];
    move |y, x, ch| if (y / cell + x / cell).is_multiple_of(2) { a[ch] } else { b[ch] }
}

/// Sum of a few random low-frequency plane waves per channel.
fn smooth_noise(rng: &mut ChaCha8Rng, side: usize) -> impl Fn(usize, usize, usize) -> f64 {
    let waves: Vec<[(f64, f64, f64); 5]> = (0..3)
        .map(|_| {
            std::array::from_fn(|_| {
                let fy = rng.random_range(-6.0..6.0) / side as f64;
                let fx = rng.random_range(-6.0..6.0) / side as f64;
                (fy, fx, rng.random_range(0.0..TAU))
            })
        })
        .collect();
    move |y, x, ch| {
        let s: f64 = waves[ch].iter().map(|&(fy, fx, p)| (TAU * (fy * y as f64 + fx * x as f64) + p).sin()).sum();
        0.5 + 0.09 * s
    }
}

/// Image `index` of the corpus (`0..CORPUS_SIZE`), `side × side` pixels.
pub fn synthetic_image(index: usize, side: usize) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DE_0000 + index as u64);
    match index % 4 {
        0 => ImageTensor::from_fn(side, side, gradient(&mut rng, side)),
        1 => ImageTensor::from_fn(side, side, checkerboard(&mut rng)),
        2 => ImageTensor::from_fn(side, side, smooth_noise(&mut rng, side)),
        _ => {
            let g = gradient(&mut rng, side);
            let c = checkerboard(&mut rng);
            let t = smooth_noise(&mut rng, side);
            ImageTensor::from_fn(side, side, move |y, x, ch| 0.4 * g(y, x, ch) + 0.3 * c(y, x, ch) + 0.3 * t(y, x, ch))
        }
    }
}

/// The 16-image, 128×128 corpus.
pub fn synthetic_corpus() -> Vec<ImageTensor> {
    (0..CORPUS_SIZE).map(|i| synthetic_image(i, CORPUS_SIDE)).collect()
}
