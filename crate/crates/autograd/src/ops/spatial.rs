//! Padding, normalization, pooling and pixel rearrangement.

use std::rc::Rc;

use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Mirror `i` into `0..n` without repeating the edge; a length-1 axis is
/// replicated.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m >= n as isize { period - m } else { m }) as usize
}

/// Argmax position inside a 2×2 window: 0 top-left, 1 top-right,
/// 2 bottom-left, 3 bottom-right.
pub const SWITCH_OFFSETS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

/// Max over each 2×2 window with the winning position; ties go to the
/// smallest position index.
pub fn maxpool2x2_forward(x: &Tensor) -> (Tensor, Vec<u8>) {
    let (n, c, h, w) = x.dims4();
    assert!(h % 2 == 0 && w % 2 == 0, "maxpool2x2 needs even spatial dims, got {h}x{w}");
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, ho, wo]);
    let mut switches = vec![0u8; n * c * ho * wo];
    let xd = x.data();
    for plane in 0..n * c {
        let src = &xd[plane * h * w..(plane + 1) * h * w];
        for y in 0..ho {
            for xx in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_k = 0u8;
                for (k, (dy, dx)) in SWITCH_OFFSETS.iter().enumerate() {
                    let v = src[(2 * y + dy) * w + 2 * xx + dx];
                    if v > best || k == 0 {
                        best = v;
                        best_k = k as u8;
                    }
                }
                let o = plane * ho * wo + y * wo + xx;
                out.data_mut()[o] = best;
                switches[o] = best_k;
            }
        }
    }
    (out, switches)
}

/// Place each value at its switch position inside a zeroed 2×2 window.
pub fn unpool2x2_forward(x: &Tensor, switches: &[u8]) -> Tensor {
    let (n, c, h, w) = x.dims4();
    assert_eq!(switches.len(), n * c * h * w, "unpool: switch count mismatch");
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = Tensor::zeros(&[n, c, ho, wo]);
    let od = out.data_mut();
    for plane in 0..n * c {
        for y in 0..h {
            for xx in 0..w {
                let i = plane * h * w + y * w + xx;
                let (dy, dx) = SWITCH_OFFSETS[switches[i] as usize];
                od[plane * ho * wo + (2 * y + dy) * wo + 2 * xx + dx] = x.data()[i];
            }
        }
    }
    out
}

fn gather_at_switches(g: &Tensor, switches: &[u8]) -> Tensor {
    let (n, c, h, w) = g.dims4();
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, ho, wo]);
    for plane in 0..n * c {
        for y in 0..ho {
            for xx in 0..wo {
                let i = plane * ho * wo + y * wo + xx;
                let (dy, dx) = SWITCH_OFFSETS[switches[i] as usize];
                out.data_mut()[i] = g.data()[plane * h * w + (2 * y + dy) * w + 2 * xx + dx];
            }
        }
    }
    out
}

impl Tape {
    pub fn reflect_pad(&mut self, x: Var, pad: usize) -> Var {
        if pad == 0 {
            return x;
        }
        let (n, c, h, w) = self.value(x).dims4();
        let (hp, wp) = (h + 2 * pad, w + 2 * pad);
        let index: Rc<Vec<usize>> = Rc::new(
            (0..hp)
                .flat_map(|y| {
                    (0..wp).map(move |xx| {
                        reflect(y as isize - pad as isize, h) * w + reflect(xx as isize - pad as isize, w)
                    })
                })
                .collect(),
        );
        let xv = self.value(x);
        let mut out = Tensor::zeros(&[n, c, hp, wp]);
        for plane in 0..n * c {
            let src = &xv.data()[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out.data_mut()[plane * hp * wp..(plane + 1) * hp * wp];
            for (d, &s) in dst.iter_mut().zip(index.iter()) {
                *d = src[s];
            }
        }
        self.push_op(out, &[x], move || {
            Box::new(move |g, _| {
                let mut dx = Tensor::zeros(&[n, c, h, w]);
                for plane in 0..n * c {
                    let src = &g.data()[plane * hp * wp..(plane + 1) * hp * wp];
                    let dst = &mut dx.data_mut()[plane * h * w..(plane + 1) * h * w];
                    for (&gv, &s) in src.iter().zip(index.iter()) {
                        dst[s] += gv;
                    }
                }
                vec![Some(dx)]
            })
        })
    }

    /// Per-sample, per-channel normalization over the spatial axes, no affine.
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let len = h * w;
        let mut out = self.value(x).clone();
        let mut inv_std = vec![0.0; n * c];
        for (plane, chunk) in out.data_mut().chunks_mut(len).enumerate() {
            let mean = chunk.iter().sum::<f64>() / len as f64;
            let var = chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64;
            let s = 1.0 / (var + eps).sqrt();
            inv_std[plane] = s;
            for v in chunk.iter_mut() {
                *v = (*v - mean) * s;
            }
        }
        let y = Rc::new(out.clone());
        self.push_op(out, &[x], move || {
            Box::new(move |g, _| {
                let mut dx = Tensor::zeros(g.shape());
                let chunks = dx.data_mut().chunks_mut(len);
                for (plane, dst) in chunks.enumerate() {
                    let gy = &g.data()[plane * len..(plane + 1) * len];
                    let yy = &y.data()[plane * len..(plane + 1) * len];
                    let mean_g = gy.iter().sum::<f64>() / len as f64;
                    let mean_gy = gy.iter().zip(yy).map(|(a, b)| a * b).sum::<f64>() / len as f64;
                    for ((d, &gv), &yv) in dst.iter_mut().zip(gy).zip(yy) {
                        *d = inv_std[plane] * (gv - mean_g - yv * mean_gy);
                    }
                }
                vec![Some(dx)]
            })
        })
    }

    /// 2×2 max-pool that also reports the argmax position of every window.
    pub fn maxpool2x2_with_switches(&mut self, x: Var) -> (Var, Rc<Vec<u8>>) {
        let (out, switches) = maxpool2x2_forward(self.value(x));
        let switches = Rc::new(switches);
        let sw = Rc::clone(&switches);
        let in_shape = self.value(x).shape().to_vec();
        let var = self.push_op(out, &[x], move || {
            Box::new(move |g, _| {
                let mut t = unpool2x2_forward(g, &sw);
                debug_assert_eq!(t.shape(), &in_shape[..]);
                t = t.reshape(&in_shape);
                vec![Some(t)]
            })
        });
        (var, switches)
    }

    /// Inverse placement of [`Tape::maxpool2x2_with_switches`].
    pub fn unpool2x2(&mut self, x: Var, switches: Rc<Vec<u8>>) -> Var {
        let out = unpool2x2_forward(self.value(x), &switches);
        self.push_op(out, &[x], move || Box::new(move |g, _| vec![Some(gather_at_switches(g, &switches))]))
    }

    /// Max-pool with a `k×k` window and stride `s`, no padding, floor mode.
    pub fn maxpool(&mut self, x: Var, k: usize, s: usize) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        assert!(h >= k && w >= k, "maxpool window {k} larger than {h}x{w}");
        let (ho, wo) = ((h - k) / s + 1, (w - k) / s + 1);
        let mut out = Tensor::zeros(&[n, c, ho, wo]);
        let mut arg = vec![0usize; n * c * ho * wo];
        let xd = self.value(x).data();
        for plane in 0..n * c {
            for y in 0..ho {
                for xx in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0;
                    for dy in 0..k {
                        for dx in 0..k {
                            let i = plane * h * w + (y * s + dy) * w + xx * s + dx;
                            if xd[i] > best {
                                best = xd[i];
                                best_i = i;
                            }
                        }
                    }
                    let o = plane * ho * wo + y * wo + xx;
                    out.data_mut()[o] = best;
                    arg[o] = best_i;
                }
            }
        }
        let in_shape = self.value(x).shape().to_vec();
        self.push_op(out, &[x], move || {
            Box::new(move |g, _| {
                let mut dx = Tensor::zeros(&in_shape);
                for (o, &i) in arg.iter().enumerate() {
                    dx.data_mut()[i] += g.data()[o];
                }
                vec![Some(dx)]
            })
        })
    }

    /// `[N, C·r², H, W] → [N, C, H·r, W·r]`.
    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Var {
        let (n, cin, h, w) = self.value(x).dims4();
        assert_eq!(cin % (r * r), 0, "pixel_shuffle: {cin} channels not divisible by {}", r * r);
        let c = cin / (r * r);
        let (ho, wo) = (h * r, w * r);
        // index[dst] = src
        let index: Rc<Vec<usize>> = Rc::new(
            (0..n * c * ho * wo)
                .map(|dst| {
                    let ox = dst % wo;
                    let oy = (dst / wo) % ho;
                    let oc = (dst / (wo * ho)) % c;
                    let b = dst / (wo * ho * c);
                    let ic = oc * r * r + (oy % r) * r + ox % r;
                    ((b * cin + ic) * h + oy / r) * w + ox / r
                })
                .collect(),
        );
        let xd = self.value(x).data();
        let out = Tensor::from_vec(&[n, c, ho, wo], index.iter().map(|&s| xd[s]).collect());
        let in_shape = self.value(x).shape().to_vec();
        self.push_op(out, &[x], move || {
            Box::new(move |g, _| {
                let mut dx = Tensor::zeros(&in_shape);
                for (&s, &gv) in index.iter().zip(g.data()) {
                    dx.data_mut()[s] += gv;
                }
                vec![Some(dx)]
            })
        })
    }

    /// `[N, C, H, W] → [N, C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let len = (h * w) as f64;
        let data = self.value(x).data().chunks(h * w).map(|p| p.iter().sum::<f64>() / len).collect();
        self.push_op(Tensor::from_vec(&[n, c], data), &[x], move || {
            Box::new(move |g, _| {
                let mut dx = Tensor::zeros(&[n, c, h, w]);
                for (plane, chunk) in dx.data_mut().chunks_mut(h * w).enumerate() {
                    chunk.fill(g.data()[plane] / len);
                }
                vec![Some(dx)]
            })
        })
    }
}
