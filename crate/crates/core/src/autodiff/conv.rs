//! 2-d convolution and its transpose, both in cross-correlation convention.
//!
//! Inputs are `[n, c, h, w]` (or `[c, h, w]`, treated as a batch of one).
//! Both directions share one im2col layout: a column matrix of shape
//! `[c·kh·kw, n·oh·ow]` where `(oh, ow)` is the extent of the
//! *correlation output* grid.

use super::scalar::{gemm, Operand};
use super::tape::{Accumulator, Op};
use super::{Scalar, Tape, Tensor, Var};
use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    /// Channels, height, width of the correlation input (the "image" side).
    pub c_img: usize,
    pub h: usize,
    pub w: usize,
    /// Channels and extent of the correlation output (the "column" side).
    pub c_col: usize,
    pub oh: usize,
    pub ow: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    /// Input was 3-d; output drops the batch axis too.
    pub unbatched: bool,
}

impl ConvGeom {
    fn kernel_rows(&self) -> usize {
        self.c_img * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

fn split_batch(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize, usize, bool)> {
    match *shape {
        [c, h, w] => Ok((1, c, h, w, true)),
        [n, c, h, w] => Ok((n, c, h, w, false)),
        _ => shape_err(op, format!("expected [n,c,h,w] or [c,h,w], got {shape:?}")),
    }
}

/// Unfold image `[n, c_img, h, w]` into columns `[c_img·kh·kw, n·oh·ow]`.
fn im2col<T: Scalar>(img: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.positions();
    let np = g.n * p;
    let mut cols = vec![T::zero(); g.kernel_rows() * np];
    for ci in 0..g.c_img {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst_row = &mut cols[row * np..(row + 1) * np];
                for b in 0..g.n {
                    let src = &img[(b * g.c_img + ci) * g.h * g.w..][..g.h * g.w];
                    for oy in 0..g.oh {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src_row = &src[iy as usize * g.w..][..g.w];
                        let dst = &mut dst_row[b * p + oy * g.ow..][..g.ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                *d = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add columns back onto the image grid.
fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.positions();
    let np = g.n * p;
    let mut img = vec![T::zero(); g.n * g.c_img * g.h * g.w];
    for ci in 0..g.c_img {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src_row = &cols[row * np..(row + 1) * np];
                for b in 0..g.n {
                    let dst = &mut img[(b * g.c_img + ci) * g.h * g.w..][..g.h * g.w];
                    for oy in 0..g.oh {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let dst_row = &mut dst[iy as usize * g.w..][..g.w];
                        let src = &src_row[b * p + oy * g.ow..][..g.ow];
                        for (ox, &s) in src.iter().enumerate() {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                let d = &mut dst_row[ix as usize];
                                *d = *d + s;
                            }
                        }
                    }
                }
            }
        }
    }
    img
}

/// `[n, c, p]` → `[c, n·p]`.
fn batch_to_channel_major<T: Scalar>(x: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for ci in 0..c {
            out[ci * n * p + b * p..][..p].copy_from_slice(&x[(b * c + ci) * p..][..p]);
        }
    }
    out
}

/// `[c, n·p]` → `[n, c, p]`.
fn channel_to_batch_major<T: Scalar>(x: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for ci in 0..c {
            out[(b * c + ci) * p..][..p].copy_from_slice(&x[ci * n * p + b * p..][..p]);
        }
    }
    out
}

fn output_shape(g: &ConvGeom, c: usize, h: usize, w: usize) -> Vec<usize> {
    if g.unbatched {
        vec![c, h, w]
    } else {
        vec![g.n, c, h, w]
    }
}

impl<T: Scalar> Tape<T> {
    /// Cross-correlation of `x[n,c_in,h,w]` with `k[c_out,c_in,kh,kw]`.
    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, pad: usize) -> Result<Var> {
        self.check(&[x, k])?;
        let (xv, kv) = (self.val(x), self.val(k));
        let (n, c_in, h, w, unbatched) = split_batch("conv2d", xv.shape())?;
        let &[c_out, kc, kh, kw] = kv.shape() else {
            return shape_err(
                "conv2d",
                format!("kernel must be 4-d, got {:?}", kv.shape()),
            );
        };
        if kc != c_in {
            return shape_err(
                "conv2d",
                format!("input has {c_in} channels, kernel expects {kc}"),
            );
        }
        if stride == 0 {
            return shape_err("conv2d", "stride must be >= 1");
        }
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return shape_err(
                "conv2d",
                format!(
                    "kernel {kh}x{kw} exceeds padded input {}x{}",
                    h + 2 * pad,
                    w + 2 * pad
                ),
            );
        }
        let geom = ConvGeom {
            n,
            c_img: c_in,
            h,
            w,
            c_col: c_out,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (w + 2 * pad - kw) / stride + 1,
            kh,
            kw,
            stride,
            pad,
            unbatched,
        };
        let cols = im2col(xv.data(), &geom);
        let np = n * geom.positions();
        let mut tmp = vec![T::zero(); c_out * np];
        gemm(
            Operand::plain(kv.data(), c_out, geom.kernel_rows()),
            Operand::plain(&cols, geom.kernel_rows(), np),
            T::zero(),
            &mut tmp,
        );
        let out = channel_to_batch_major(&tmp, n, c_out, geom.positions());
        let out = Tensor::new(output_shape(&geom, c_out, geom.oh, geom.ow), out)?;
        let rg = self.any_requires_grad(&[x, k]);
        let cols = if self.requires_grad(k) {
            cols
        } else {
            Vec::new()
        };
        Ok(self.push(out, Op::Conv2d { x, k, geom, cols }, rg))
    }

    /// Transposed convolution of `x[n,c_in,h,w]` with `k[c_in,c_out,kh,kw]`:
    /// the input-gradient map of the matching [`Tape::conv2d`].
    pub fn conv_transpose2d(&mut self, x: Var, k: Var, stride: usize, pad: usize) -> Result<Var> {
        self.check(&[x, k])?;
        let (xv, kv) = (self.val(x), self.val(k));
        let (n, c_in, h, w, unbatched) = split_batch("conv_transpose2d", xv.shape())?;
        let &[kc, c_out, kh, kw] = kv.shape() else {
            return shape_err(
                "conv_transpose2d",
                format!("kernel must be 4-d, got {:?}", kv.shape()),
            );
        };
        if kc != c_in {
            return shape_err(
                "conv_transpose2d",
                format!("input has {c_in} channels, kernel expects {kc}"),
            );
        }
        if stride == 0 {
            return shape_err("conv_transpose2d", "stride must be >= 1");
        }
        let oh = ((h - 1) * stride + kh) as isize - 2 * pad as isize;
        let ow = ((w - 1) * stride + kw) as isize - 2 * pad as isize;
        if oh <= 0 || ow <= 0 {
            return shape_err(
                "conv_transpose2d",
                format!("non-positive output extent {oh}x{ow}"),
            );
        }
        // The correlation runs from the output grid (image side) to the
        // input grid (column side).
        let geom = ConvGeom {
            n,
            c_img: c_out,
            h: oh as usize,
            w: ow as usize,
            c_col: c_in,
            oh: h,
            ow: w,
            kh,
            kw,
            stride,
            pad,
            unbatched,
        };
        let p = h * w;
        let xt = batch_to_channel_major(xv.data(), n, c_in, p);
        let mut cols = vec![T::zero(); geom.kernel_rows() * n * p];
        gemm(
            Operand::t(kv.data(), c_in, geom.kernel_rows()),
            Operand::plain(&xt, c_in, n * p),
            T::zero(),
            &mut cols,
        );
        let out = col2im(&cols, &geom);
        let out = Tensor::new(output_shape(&geom, c_out, geom.h, geom.w), out)?;
        let rg = self.any_requires_grad(&[x, k]);
        Ok(self.push(out, Op::ConvTranspose2d { x, k, geom }, rg))
    }
}

pub(crate) fn conv2d_backward<T: Scalar>(
    acc: &mut Accumulator<'_, T>,
    x: Var,
    k: Var,
    geom: &ConvGeom,
    cols: &[T],
    g: &[T],
) {
    let kv = acc.tape.val(k);
    let np = geom.n * geom.positions();
    let rows = geom.kernel_rows();
    let gt = channel_major(g, geom.n, geom.c_col, geom.positions());
    acc.add(k, || {
        let mut dk = vec![T::zero(); geom.c_col * rows];
        gemm(
            Operand::plain(&gt, geom.c_col, np),
            Operand::t(cols, rows, np),
            T::zero(),
            &mut dk,
        );
        dk
    });
    acc.add(x, || {
        let mut dcols = vec![T::zero(); rows * np];
        gemm(
            Operand::t(kv.data(), geom.c_col, rows),
            Operand::plain(&gt, geom.c_col, np),
            T::zero(),
            &mut dcols,
        );
        col2im(&dcols, geom)
    });
}

pub(crate) fn conv_transpose2d_backward<T: Scalar>(
    acc: &mut Accumulator<'_, T>,
    x: Var,
    k: Var,
    geom: &ConvGeom,
    g: &[T],
) {
    let (xv, kv) = (acc.tape.val(x), acc.tape.val(k));
    let p = geom.positions();
    let np = geom.n * p;
    let rows = geom.kernel_rows();
    let dcols = im2col(g, geom);
    acc.add(k, || {
        let xt = batch_to_channel_major(xv.data(), geom.n, geom.c_col, p);
        let mut dk = vec![T::zero(); geom.c_col * rows];
        gemm(
            Operand::plain(&xt, geom.c_col, np),
            Operand::t(&dcols, rows, np),
            T::zero(),
            &mut dk,
        );
        dk
    });
    acc.add(x, || {
        let mut dxt = vec![T::zero(); geom.c_col * np];
        gemm(
            Operand::plain(kv.data(), geom.c_col, rows),
            Operand::plain(&dcols, rows, np),
            T::zero(),
            &mut dxt,
        );
        channel_to_batch_major(&dxt, geom.n, geom.c_col, p)
    });
}

fn channel_major<T: Scalar>(g: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    if n == 1 {
        g.to_vec()
    } else {
        batch_to_channel_major(g, n, c, p)
    }
}
