use super::tape::{Accumulator, Op};
use super::{Scalar, Tape, Tensor, Var};
use crate::error::{shape_err, Result};

/// Probabilities fed to [`Tape::bce`] are clamped to `[P_CLAMP, 1 − P_CLAMP]`.
pub const P_CLAMP: f64 = 1e-7;

fn clamp_p<T: Scalar>(p: T) -> T {
    let lo = T::from_f64(P_CLAMP);
    p.max(lo).min(T::one() - lo)
}

/// Row-wise softmax of a `[n, k]` buffer.
pub fn softmax_rows<T: Scalar>(logits: &[T], k: usize) -> Vec<T> {
    let mut out = logits.to_vec();
    for row in out.chunks_mut(k) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total = total + *v;
        }
        row.iter_mut().for_each(|v| *v = *v / total);
    }
    out
}

impl<T: Scalar> Tape<T> {
    /// `Σ (a − b)²`.
    pub fn l2_sq(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        let (av, bv) = (self.val(a), self.val(b));
        if av.shape() != bv.shape() {
            return shape_err("l2_sq", format!("{:?} vs {:?}", av.shape(), bv.shape()));
        }
        let s = av
            .data()
            .iter()
            .zip(bv.data())
            .fold(T::zero(), |s, (&x, &y)| s + (x - y) * (x - y));
        let rg = self.any_requires_grad(&[a, b]);
        Ok(self.push(Tensor::scalar(s), Op::L2Sq(a, b), rg))
    }

    /// Mean binary cross-entropy of probabilities `p` against `target`.
    pub fn bce(&mut self, p: Var, target: &[T]) -> Result<Var> {
        self.check(&[p])?;
        let pv = self.val(p);
        if pv.numel() != target.len() {
            return shape_err(
                "bce",
                format!("{} probabilities, {} targets", pv.numel(), target.len()),
            );
        }
        let one = T::one();
        let total = pv.data().iter().zip(target).fold(T::zero(), |s, (&p, &t)| {
            let p = clamp_p(p);
            s - (t * p.ln() + (one - t) * (one - p).ln())
        });
        let loss = total / T::from_f64(target.len() as f64);
        let rg = self.any_requires_grad(&[p]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                p,
                target: target.to_vec(),
            },
            rg,
        ))
    }

    /// `bce(sigmoid(logits), target)` evaluated stably in logit space.
    pub fn bce_with_logits(&mut self, logits: Var, target: &[T]) -> Result<Var> {
        self.check(&[logits])?;
        let lv = self.val(logits);
        if lv.numel() != target.len() {
            return shape_err(
                "bce_with_logits",
                format!("{} logits, {} targets", lv.numel(), target.len()),
            );
        }
        let total = lv.data().iter().zip(target).fold(T::zero(), |s, (&l, &t)| {
            s + l.max(T::zero()) - l * t + (T::one() + (-l.abs()).exp()).ln()
        });
        let loss = total / T::from_f64(target.len() as f64);
        let rg = self.any_requires_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BceWithLogits {
                logits,
                target: target.to_vec(),
            },
            rg,
        ))
    }

    /// Mean softmax cross-entropy of `logits[n, k]` against class indices.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.check(&[logits])?;
        let lv = self.val(logits);
        let &[n, k] = lv.shape() else {
            return shape_err("softmax_xent", format!("need [n, k], got {:?}", lv.shape()));
        };
        if labels.len() != n || labels.iter().any(|&l| l >= k) {
            return shape_err(
                "softmax_xent",
                format!("{n} rows of {k} classes vs labels {labels:?}"),
            );
        }
        let probs = softmax_rows(lv.data(), k);
        let floor = T::min_positive_value();
        let total = labels
            .iter()
            .enumerate()
            .fold(T::zero(), |s, (i, &l)| s - probs[i * k + l].max(floor).ln());
        let loss = total / T::from_f64(n as f64);
        let rg = self.any_requires_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }
}

pub(crate) fn l2_sq_backward<T: Scalar>(acc: &mut Accumulator<'_, T>, a: Var, b: Var, g: T) {
    let two = T::from_f64(2.0);
    let diff: Vec<T> = acc
        .tape
        .val(a)
        .data()
        .iter()
        .zip(acc.tape.val(b).data())
        .map(|(&x, &y)| two * g * (x - y))
        .collect();
    if acc.wants(b) {
        acc.add(b, || diff.iter().map(|&d| -d).collect());
    }
    acc.add(a, || diff);
}

pub(crate) fn bce_backward<T: Scalar>(acc: &mut Accumulator<'_, T>, p: Var, target: &[T], g: T) {
    let n = T::from_f64(target.len() as f64);
    let lo = T::from_f64(P_CLAMP);
    let hi = T::one() - lo;
    let pv = acc.tape.val(p).data();
    acc.add(p, || {
        pv.iter()
            .zip(target)
            .map(|(&p, &t)| {
                if p < lo || p > hi {
                    T::zero()
                } else {
                    g * (p - t) / (p * (T::one() - p)) / n
                }
            })
            .collect()
    });
}

pub(crate) fn bce_logits_backward<T: Scalar>(
    acc: &mut Accumulator<'_, T>,
    logits: Var,
    target: &[T],
    g: T,
) {
    let n = T::from_f64(target.len() as f64);
    let lv = acc.tape.val(logits).data();
    acc.add(logits, || {
        lv.iter()
            .zip(target)
            .map(|(&l, &t)| g * (super::activation::sigmoid(l) - t) / n)
            .collect()
    });
}

pub(crate) fn softmax_xent_backward<T: Scalar>(
    acc: &mut Accumulator<'_, T>,
    logits: Var,
    labels: &[usize],
    probs: &[T],
    g: T,
) {
    let n = labels.len();
    let k = probs.len() / n;
    let scale = g / T::from_f64(n as f64);
    acc.add(logits, || {
        let mut d: Vec<T> = probs.iter().map(|&p| p * scale).collect();
        for (i, &l) in labels.iter().enumerate() {
            d[i * k + l] = d[i * k + l] - scale;
        }
        d
    });
}
