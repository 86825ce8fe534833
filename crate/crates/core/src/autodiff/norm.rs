use super::tape::{Accumulator, Op};
use super::{Scalar, Tape, Tensor, Var};
use crate::error::{shape_err, Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

pub enum BatchNormMode<'a, T> {
    /// Normalize with batch statistics; requires at least two samples.
    Train,
    /// Normalize with stored running statistics.
    Infer {
        running_mean: &'a [T],
        running_var: &'a [T],
    },
}

/// Per-channel statistics of one training batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased variance, as folded into running estimates.
    pub var: Vec<T>,
}

impl<T: Scalar> BatchStats<T> {
    /// `running ← momentum·running + (1−momentum)·batch`.
    pub fn update_running(&self, running_mean: &mut [T], running_var: &mut [T]) {
        let m = T::from_f64(BN_MOMENTUM);
        let one = T::one();
        for (r, &b) in running_mean.iter_mut().zip(&self.mean) {
            *r = m * *r + (one - m) * b;
        }
        for (r, &b) in running_var.iter_mut().zip(&self.var) {
            *r = m * *r + (one - m) * b;
        }
    }
}

impl<T: Scalar> Tape<T> {
    /// Batch normalization over all axes but the channel axis 1.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BatchNormMode<'_, T>,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        self.check(&[x, gamma, beta])?;
        let xv = self.val(x);
        let shape = xv.shape().to_vec();
        if shape.len() < 2 {
            return shape_err("batch_norm", format!("need [n, c, ...], got {shape:?}"));
        }
        let (n, c) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        if self.val(gamma).numel() != c || self.val(beta).numel() != c {
            return shape_err("batch_norm", format!("affine params must have {c} entries"));
        }
        let count = n * inner;
        let eps = T::from_f64(BN_EPS);
        let data = xv.data();

        let (mean, var, stats) = match mode {
            BatchNormMode::Train => {
                if n < 2 {
                    return Err(Error::InvalidArgument(format!(
                        "batch_norm in train mode needs n >= 2, got {n}"
                    )));
                }
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for (i, chunk) in data.chunks(inner).enumerate() {
                    let ch = i % c;
                    mean[ch] = chunk.iter().fold(mean[ch], |s, &v| s + v);
                }
                let cnt = T::from_f64(count as f64);
                mean.iter_mut().for_each(|m| *m = *m / cnt);
                for (i, chunk) in data.chunks(inner).enumerate() {
                    let ch = i % c;
                    let mu = mean[ch];
                    var[ch] = chunk.iter().fold(var[ch], |s, &v| s + (v - mu) * (v - mu));
                }
                let unbiased = var
                    .iter()
                    .map(|&v| v / T::from_f64((count - 1) as f64))
                    .collect();
                var.iter_mut().for_each(|v| *v = *v / cnt);
                let stats = BatchStats {
                    mean: mean.clone(),
                    var: unbiased,
                };
                (mean, var, Some(stats))
            }
            BatchNormMode::Infer {
                running_mean,
                running_var,
            } => {
                if running_mean.len() != c || running_var.len() != c {
                    return shape_err("batch_norm", "running statistics length");
                }
                (running_mean.to_vec(), running_var.to_vec(), None)
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (gv, bv) = (self.val(gamma).data(), self.val(beta).data());
        let mut xhat = vec![T::zero(); data.len()];
        let mut out = vec![T::zero(); data.len()];
        for (i, (chunk, (xh, o))) in data
            .chunks(inner)
            .zip(xhat.chunks_mut(inner).zip(out.chunks_mut(inner)))
            .enumerate()
        {
            let ch = i % c;
            for ((&v, h), y) in chunk.iter().zip(xh.iter_mut()).zip(o.iter_mut()) {
                *h = (v - mean[ch]) * inv_std[ch];
                *y = gv[ch] * *h + bv[ch];
            }
        }
        let out = Tensor::new(shape, out)?;
        let rg = self.any_requires_grad(&[x, gamma, beta]);
        let batch_stats = stats.is_some();
        let v = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            rg,
        );
        Ok((v, stats))
    }
}

pub(crate) fn batch_norm_backward<T: Scalar>(
    acc: &mut Accumulator<'_, T>,
    [x, gamma, beta]: [Var; 3],
    xhat: &[T],
    inv_std: &[T],
    batch_stats: bool,
    g: &[T],
) {
    let shape = acc.tape.val(x).shape();
    let (n, c) = (shape[0], shape[1]);
    let inner: usize = shape[2..].iter().product();
    let gv = acc.tape.val(gamma).data();

    let mut sum_g = vec![T::zero(); c];
    let mut sum_gx = vec![T::zero(); c];
    for (i, (gc, hc)) in g.chunks(inner).zip(xhat.chunks(inner)).enumerate() {
        let ch = i % c;
        for (&gi, &hi) in gc.iter().zip(hc) {
            sum_g[ch] = sum_g[ch] + gi;
            sum_gx[ch] = sum_gx[ch] + gi * hi;
        }
    }
    acc.add(gamma, || sum_gx.clone());
    acc.add(beta, || sum_g.clone());
    acc.add(x, || {
        let m = T::from_f64((n * inner) as f64);
        let mut dx = vec![T::zero(); g.len()];
        for (i, ((dc, gc), hc)) in dx
            .chunks_mut(inner)
            .zip(g.chunks(inner))
            .zip(xhat.chunks(inner))
            .enumerate()
        {
            let ch = i % c;
            let scale = gv[ch] * inv_std[ch];
            for ((d, &gi), &hi) in dc.iter_mut().zip(gc).zip(hc) {
                *d = if batch_stats {
                    scale * (gi - sum_g[ch] / m - hi * sum_gx[ch] / m)
                } else {
                    scale * gi
                };
            }
        }
        dx
    });
}
