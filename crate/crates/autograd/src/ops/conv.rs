//! 2-D convolution via im2col + GEMM.

use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn cols(&self) -> usize {
        self.out_height() * self.out_width()
    }
}

fn im2col(x: &[f64], g: &ConvGeom, col: &mut [f64]) {
    let (ho, wo) = (g.out_height(), g.out_width());
    let l = ho * wo;
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let dst = &mut col[row * l..(row + 1) * l];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let out_row = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= g.height as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *o = if ix < 0 || ix >= g.width as isize { 0.0 } else { src[ix as usize] };
                    }
                }
                row += 1;
            }
        }
    }
}

fn col2im(col: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let (ho, wo) = (g.out_height(), g.out_width());
    let l = ho * wo;
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let src = &col[row * l..(row + 1) * l];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// `c[m×n] = alpha * a[m×k] · b[k×n] + beta * c`, all row-major unless strides say otherwise.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the slices cover the strided extents computed by the callers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Forward convolution of a full batch; returns the NCHW output.
pub fn conv2d_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, pad: usize) -> Tensor {
    let (n, c, h, wd) = x.dims4();
    let (o, wc, k, k2) = w.dims4();
    assert_eq!(c, wc, "conv2d: input has {c} channels, kernel expects {wc}");
    assert_eq!(k, k2, "conv2d: square kernels only");
    assert!(h + 2 * pad >= k && wd + 2 * pad >= k, "conv2d: input {h}x{wd} smaller than kernel {k}");
    let g = ConvGeom { channels: c, height: h, width: wd, kernel: k, stride, pad };
    let (ho, wo) = (g.out_height(), g.out_width());
    let (rows, l) = (g.rows(), g.cols());
    let mut out = Tensor::zeros(&[n, o, ho, wo]);
    let mut col = vec![0.0; rows * l];
    for i in 0..n {
        im2col(x.sample(i), &g, &mut col);
        let dst = &mut out.data_mut()[i * o * l..(i + 1) * o * l];
        if let Some(b) = b {
            for (oc, chunk) in dst.chunks_mut(l).enumerate() {
                chunk.fill(b.data()[oc]);
            }
        }
        gemm(o, rows, l, w.data(), (rows, 1), &col, (l, 1), 1.0, dst);
    }
    out
}

impl Tape {
    /// Zero-padded convolution. `w` is `[out, in, k, k]`, `b` is `[out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let (xv, wv) = (self.value_rc(x), self.value_rc(w));
        let bv = b.map(|b| self.value_rc(b));
        let value = conv2d_forward(&xv, &wv, bv.as_deref(), stride, pad);
        let mut parents = vec![x, w];
        parents.extend(b);
        self.push_op(value, &parents, move || {
            Box::new(move |gy, needs| {
                let (n, c, h, wd) = xv.dims4();
                let (o, _, k, _) = wv.dims4();
                let g = ConvGeom { channels: c, height: h, width: wd, kernel: k, stride, pad };
                let (rows, l) = (g.rows(), g.cols());
                let mut dx = needs[0].then(|| Tensor::zeros(xv.shape()));
                let mut dw = needs[1].then(|| Tensor::zeros(wv.shape()));
                let mut col = vec![0.0; rows * l];
                let mut dcol = vec![0.0; rows * l];
                for i in 0..n {
                    let gy_i = &gy.data()[i * o * l..(i + 1) * o * l];
                    if let Some(dw) = dw.as_mut() {
                        im2col(xv.sample(i), &g, &mut col);
                        // dW += dY · colᵀ
                        gemm(o, l, rows, gy_i, (l, 1), &col, (1, l), 1.0, dw.data_mut());
                    }
                    if let Some(dx) = dx.as_mut() {
                        // dcol = Wᵀ · dY
                        gemm(rows, o, l, wv.data(), (1, rows), gy_i, (l, 1), 0.0, &mut dcol);
                        let len = c * h * wd;
                        col2im(&dcol, &g, &mut dx.data_mut()[i * len..(i + 1) * len]);
                    }
                }
                let mut grads = vec![dx, dw];
                if needs.len() > 2 {
                    grads.push(needs[2].then(|| {
                        let mut db = Tensor::zeros(&[o]);
                        for i in 0..n {
                            for oc in 0..o {
                                let start = (i * o + oc) * l;
                                db.data_mut()[oc] += gy.data()[start..start + l].iter().sum::<f64>();
                            }
                        }
                        db
                    }));
                }
                grads
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
        let (n, c, h, wd) = x.dims4();
        let (o, _, k, _) = w.dims4();
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let mut out = Tensor::zeros(&[n, o, ho, wo]);
        for i in 0..n {
            for oc in 0..o {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b.data()[oc];
                        for ic in 0..c {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let iy = (oy * stride + ki) as isize - pad as isize;
                                    let ix = (ox * stride + kj) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += x.data()[((i * c + ic) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((oc * c + ic) * k + ki) * k + kj];
                                }
                            }
                        }
                        out.data_mut()[((i * o + oc) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_direct_loop() {
        let x = Tensor::from_vec(&[2, 2, 5, 6], (0..120).map(|v| (v as f64 * 0.37).sin()).collect());
        let w = Tensor::from_vec(&[3, 2, 3, 3], (0..54).map(|v| (v as f64 * 0.11).cos()).collect());
        let b = Tensor::from_vec(&[3], vec![0.1, -0.2, 0.3]);
        for (stride, pad) in [(1, 0), (1, 1), (2, 1), (2, 0)] {
            let fast = conv2d_forward(&x, &w, Some(&b), stride, pad);
            let slow = naive(&x, &w, &b, stride, pad);
            assert_eq!(fast.shape(), slow.shape());
            for (a, e) in fast.data().iter().zip(slow.data()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }
}
