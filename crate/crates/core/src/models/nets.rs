use super::checkpoint::ModelCheckpoint;
use super::registry::{Architecture, BOTTLENECK, BOTTLENECK_SIDE, FLAT, PAD, STRIDE};
use crate::autodiff::{BatchNormMode, BatchStats, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::synth::{AgeCategory, AGE_CATEGORIES};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Batch statistics; running estimates are returned for the caller to fold in.
    Train,
    Infer,
}

enum Slot<T> {
    Var(Var),
    Buffer(Vec<T>),
}

/// A checkpoint's parameters recorded on a tape.
pub struct Bound<T: Scalar> {
    pub arch: Architecture,
    entries: Vec<(String, Slot<T>)>,
}

impl<T: Scalar> Bound<T> {
    /// Record every parameter: as a gradient-tracking leaf when `trainable`,
    /// otherwise as a constant. Running statistics stay off the tape.
    pub fn new(tape: &mut Tape<T>, ckpt: &ModelCheckpoint, trainable: bool) -> Self {
        let entries = ckpt
            .params
            .iter()
            .map(|p| {
                let slot = if p.kind.trainable() {
                    let t = p.tensor.cast::<T>();
                    Slot::Var(if trainable {
                        tape.param(t)
                    } else {
                        tape.constant(t)
                    })
                } else {
                    Slot::Buffer(
                        p.tensor
                            .data()
                            .iter()
                            .map(|&v| T::from_f64(v as f64))
                            .collect(),
                    )
                };
                (p.name.clone(), slot)
            })
            .collect();
        Self {
            arch: ckpt.arch,
            entries,
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        match self.entries.iter().find(|(n, _)| n == name) {
            Some((_, Slot::Var(v))) => Ok(*v),
            _ => Err(Error::InvalidArgument(format!(
                "{} has no trainable `{name}`",
                self.arch
            ))),
        }
    }

    fn buffer(&self, name: &str) -> Result<&[T]> {
        match self.entries.iter().find(|(n, _)| n == name) {
            Some((_, Slot::Buffer(b))) => Ok(b),
            _ => Err(Error::InvalidArgument(format!(
                "{} has no buffer `{name}`",
                self.arch
            ))),
        }
    }

    /// `(name, var)` for every trainable parameter, in checkpoint order.
    pub fn trainable(&self) -> impl Iterator<Item = (&str, Var)> {
        self.entries.iter().filter_map(|(n, s)| match s {
            Slot::Var(v) => Some((n.as_str(), *v)),
            Slot::Buffer(_) => None,
        })
    }
}

/// Output of one forward pass together with any batch-norm statistics.
pub struct Pass<T> {
    pub out: Var,
    pub stats: Vec<(String, BatchStats<T>)>,
}

fn batch_norm<T: Scalar>(
    tape: &mut Tape<T>,
    p: &Bound<T>,
    prefix: &str,
    x: Var,
    phase: Phase,
    stats: &mut Vec<(String, BatchStats<T>)>,
) -> Result<Var> {
    let gamma = p.var(&format!("{prefix}.gamma"))?;
    let beta = p.var(&format!("{prefix}.beta"))?;
    let mode = match phase {
        Phase::Train => BatchNormMode::Train,
        Phase::Infer => BatchNormMode::Infer {
            running_mean: p.buffer(&format!("{prefix}.running_mean"))?,
            running_var: p.buffer(&format!("{prefix}.running_var"))?,
        },
    };
    let (y, s) = tape.batch_norm(x, gamma, beta, mode)?;
    if let Some(s) = s {
        stats.push((prefix.to_string(), s));
    }
    Ok(y)
}

/// `G(z, y)`: `z[n,64]`, `y[n,6]` → image `[n,3,32,32]` in `[-1, 1]`.
pub fn generator_forward<T: Scalar>(
    tape: &mut Tape<T>,
    p: &Bound<T>,
    z: Var,
    y: Var,
    phase: Phase,
) -> Result<Pass<T>> {
    let mut stats = Vec::new();
    let n = tape.shape(z)[0];
    let h = tape.concat(z, y)?;
    let h = tape.matmul(h, p.var("fc.weight")?)?;
    let h = tape.reshape(h, &[n, BOTTLENECK, BOTTLENECK_SIDE, BOTTLENECK_SIDE])?;
    let h = batch_norm(tape, p, "bn0", h, phase, &mut stats)?;
    let mut h = tape.relu(h)?;
    for (up, bn) in [("up1", "bn1"), ("up2", "bn2")] {
        h = tape.conv_transpose2d(h, p.var(&format!("{up}.weight"))?, STRIDE, PAD)?;
        h = batch_norm(tape, p, bn, h, phase, &mut stats)?;
        h = tape.relu(h)?;
    }
    let h = tape.conv_transpose2d(h, p.var("up3.weight")?, STRIDE, PAD)?;
    let h = tape.add_channel_bias(h, p.var("up3.bias")?)?;
    Ok(Pass {
        out: tape.tanh(h)?,
        stats,
    })
}

/// Shared downsampling trunk: three stride-2 convolutions with leaky ReLU,
/// then a dense head. A condition, if given, joins after the first stage.
fn trunk<T: Scalar>(tape: &mut Tape<T>, p: &Bound<T>, x: Var, cond: Option<Var>) -> Result<Var> {
    let n = tape.shape(x)[0];
    let mut h = x;
    for stage in 1..=3 {
        h = tape.conv2d(h, p.var(&format!("conv{stage}.weight"))?, STRIDE, PAD)?;
        h = tape.add_channel_bias(h, p.var(&format!("conv{stage}.bias"))?)?;
        h = tape.leaky_relu(h)?;
        if let (1, Some(y)) = (stage, cond) {
            let (hh, ww) = (tape.shape(h)[2], tape.shape(h)[3]);
            let planes = tape.broadcast_spatial(y, hh, ww)?;
            h = tape.concat(h, planes)?;
        }
    }
    let h = tape.reshape(h, &[n, FLAT])?;
    let h = tape.matmul(h, p.var("fc.weight")?)?;
    tape.add_row_bias(h, p.var("fc.bias")?)
}

/// `D(x, y)` as a logit `[n,1]`; the probability is its sigmoid.
pub fn discriminator_logits<T: Scalar>(
    tape: &mut Tape<T>,
    p: &Bound<T>,
    x: Var,
    y: Var,
) -> Result<Var> {
    trunk(tape, p, x, Some(y))
}

/// `E(x)`: image → latent `[n,64]`.
pub fn encoder_forward<T: Scalar>(tape: &mut Tape<T>, p: &Bound<T>, x: Var) -> Result<Var> {
    trunk(tape, p, x, None)
}

/// `FR(x)`: image → unit-norm embedding `[n,32]`.
pub fn embed_forward<T: Scalar>(tape: &mut Tape<T>, p: &Bound<T>, x: Var) -> Result<Var> {
    let h = trunk(tape, p, x, None)?;
    tape.normalize_rows(h)
}

/// `A(x)`: image → age logits `[n,6]`.
pub fn age_logits<T: Scalar>(tape: &mut Tape<T>, p: &Bound<T>, x: Var) -> Result<Var> {
    trunk(tape, p, x, None)
}

/// One-hot rows `[n,6]`.
pub fn condition_tensor<T: Scalar>(ages: &[AgeCategory]) -> Tensor<T> {
    let mut data = vec![T::zero(); ages.len() * AGE_CATEGORIES];
    for (i, a) in ages.iter().enumerate() {
        data[i * AGE_CATEGORIES + a.index()] = T::one();
    }
    Tensor::new(vec![ages.len(), AGE_CATEGORIES], data).expect("non-empty condition batch")
}

pub(crate) fn expect_arch(ckpt: &ModelCheckpoint, arch: Architecture) -> Result<()> {
    if ckpt.arch == arch {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "expected a {arch} checkpoint, got {}",
            ckpt.arch
        )))
    }
}
