//! Weight initializers.

use rand::Rng;

use crate::tensor::Tensor;

/// Kaiming-uniform for ReLU networks: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
pub fn kaiming_uniform(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let fan_in: usize = shape[1..].iter().product();
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-bound..bound)).collect())
}

/// ICNR initialization for a sub-pixel convolution producing `out * r²`
/// channels: every group of `r²` consecutive output kernels shares one
/// Kaiming-initialized kernel, so the shuffled output starts as a
/// nearest-neighbour upsampling.
pub fn icnr(rng: &mut impl Rng, out: usize, input: usize, kernel: usize, r: usize) -> Tensor {
    let base = kaiming_uniform(rng, &[out, input, kernel, kernel]);
    let per = input * kernel * kernel;
    let mut data = Vec::with_capacity(out * r * r * per);
    for o in 0..out {
        let k = &base.data()[o * per..(o + 1) * per];
        for _ in 0..r * r {
            data.extend_from_slice(k);
        }
    }
    Tensor::from_vec(&[out * r * r, input, kernel, kernel], data)
}
