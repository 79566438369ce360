//! Central finite differences, used to validate analytic gradients.

use crate::tensor::Tensor;

/// `∂f/∂x` by central differences with step `h`.
pub fn numeric_gradient(f: impl Fn(&Tensor) -> f64, x: &Tensor, h: f64) -> Tensor {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// `max_i |a_i - b_i| / max(|b|_∞, floor)`.
pub fn relative_error(analytic: &Tensor, numeric: &Tensor, floor: f64) -> f64 {
    let diff = analytic.zip_map(numeric, |a, b| a - b).max_abs();
    diff / numeric.max_abs().max(floor)
}
