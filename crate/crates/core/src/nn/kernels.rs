//! Raw numeric kernels behind the differentiable ops.
//!
//! Feature maps are stored height x width x channels, row-major. Conv
//! kernels are stored out x in x kh x kw, which is also the layout of the
//! im2col weight matrix columns (`ci * k * k + dy * k + dx`).

use super::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
}

impl ConvGeom {
    pub fn pad(&self) -> usize {
        self.k / 2
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    /// Row length of the im2col matrix.
    pub fn patch(&self) -> usize {
        self.cin * self.k * self.k
    }
}

pub(crate) fn im2col<T: Real>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let (k, pad, r) = (g.k, g.pad(), g.patch());
    let mut cols = vec![T::zero(); g.pixels() * r];
    for h in 0..g.h {
        for w in 0..g.w {
            let row = &mut cols[(h * g.w + w) * r..][..r];
            for dy in 0..k {
                let yy = h + dy;
                if yy < pad || yy - pad >= g.h {
                    continue;
                }
                let yy = yy - pad;
                for dx in 0..k {
                    let xx = w + dx;
                    if xx < pad || xx - pad >= g.w {
                        continue;
                    }
                    let src = &x[(yy * g.w + xx - pad) * g.cin..][..g.cin];
                    for (ci, &v) in src.iter().enumerate() {
                        row[ci * k * k + dy * k + dx] = v;
                    }
                }
            }
        }
    }
    cols
}

pub(crate) fn col2im_add<T: Real>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let (k, pad, r) = (g.k, g.pad(), g.patch());
    for h in 0..g.h {
        for w in 0..g.w {
            let row = &cols[(h * g.w + w) * r..][..r];
            for dy in 0..k {
                let yy = h + dy;
                if yy < pad || yy - pad >= g.h {
                    continue;
                }
                let yy = yy - pad;
                for dxx in 0..k {
                    let xx = w + dxx;
                    if xx < pad || xx - pad >= g.w {
                        continue;
                    }
                    let dst = &mut dx[(yy * g.w + xx - pad) * g.cin..][..g.cin];
                    for (ci, d) in dst.iter_mut().enumerate() {
                        *d = *d + row[ci * k * k + dy * k + dxx];
                    }
                }
            }
        }
    }
}

/// Same-padded cross-correlation. `cols` is the im2col matrix of `x`, or
/// `x` itself for 1x1 kernels.
pub(crate) fn conv_forward<T: Real>(cols: &[T], kernel: &[T], bias: &[T], g: &ConvGeom) -> Vec<T> {
    let (p, r, co) = (g.pixels(), g.patch(), g.cout);
    let mut out = vec![T::zero(); p * co];
    T::gemm(p, r, co, cols, (r, 1), kernel, (1, r), T::zero(), &mut out, (co, 1));
    for px in out.chunks_exact_mut(co) {
        for (o, &b) in px.iter_mut().zip(bias) {
            *o = *o + b;
        }
    }
    out
}

/// Accumulates d(kernel) into `dk` (out x patch layout).
pub(crate) fn conv_backward_kernel<T: Real>(cols: &[T], dout: &[T], g: &ConvGeom, dk: &mut [T]) {
    let (p, r, co) = (g.pixels(), g.patch(), g.cout);
    T::gemm(r, p, co, cols, (1, r), dout, (co, 1), T::one(), dk, (1, r));
}

pub(crate) fn conv_backward_bias<T: Real>(dout: &[T], g: &ConvGeom, db: &mut [T]) {
    for px in dout.chunks_exact(g.cout) {
        for (d, &v) in db.iter_mut().zip(px) {
            *d = *d + v;
        }
    }
}

/// Gradient with respect to the im2col matrix (or the input, for 1x1).
pub(crate) fn conv_backward_cols<T: Real>(dout: &[T], kernel: &[T], g: &ConvGeom) -> Vec<T> {
    let (p, r, co) = (g.pixels(), g.patch(), g.cout);
    let mut dcols = vec![T::zero(); p * r];
    T::gemm(p, co, r, dout, (co, 1), kernel, (r, 1), T::zero(), &mut dcols, (r, 1));
    dcols
}

/// Non-overlapping max pooling with window `ph x pw`, each 1 or 2.
/// Returns the pooled map and, per output cell, the flat input index of
/// the winning cell. Ties go to the first cell in row-major window order.
pub(crate) fn maxpool<T: Real>(
    x: &[T],
    (h, w, c): (usize, usize, usize),
    ph: usize,
    pw: usize,
) -> (Vec<T>, Vec<usize>) {
    let (oh, ow) = (h / ph, w / pw);
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut arg = Vec::with_capacity(oh * ow * c);
    for i in 0..oh {
        for j in 0..ow {
            for ch in 0..c {
                let mut best_idx = ((i * ph) * w + j * pw) * c + ch;
                let mut best = x[best_idx];
                for dy in 0..ph {
                    for dx in 0..pw {
                        let idx = ((i * ph + dy) * w + j * pw + dx) * c + ch;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_idx);
            }
        }
    }
    (out, arg)
}
