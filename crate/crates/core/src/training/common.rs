use std::io::Write;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::models::{Bound, ModelCheckpoint};
use crate::optim::{AdamConfig, AdamState, ParamGrad};
use crate::synth::Sample;

/// ADAM moments for every trainable parameter of one checkpoint.
pub(crate) fn adam_for(ckpt: &ModelCheckpoint, config: AdamConfig) -> AdamState {
    AdamState::new(config, ckpt.trainable().map(|p| p.tensor.numel()))
}

/// Apply one ADAM step using the gradients recorded on `tape` for `bound`.
pub(crate) fn adam_update(
    ckpt: &mut ModelCheckpoint,
    bound: &Bound<f32>,
    tape: &Tape,
    state: &mut AdamState,
) -> Result<()> {
    let grads: Vec<Vec<f32>> = bound
        .trainable()
        .map(|(_, v)| tape.grad(v).map(<[f32]>::to_vec).unwrap_or_default())
        .collect();
    let mut params: Vec<ParamGrad<'_>> = ckpt
        .params
        .iter_mut()
        .filter(|p| p.kind.trainable())
        .zip(&grads)
        .map(|(p, g)| ParamGrad {
            name: &p.name,
            value: p.tensor.data_mut(),
            grad: g,
        })
        .collect();
    state.step(&mut params)
}

/// Shuffled full batches of indices; a trailing partial batch is dropped.
pub(crate) fn epoch_batches(n: usize, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks_exact(batch).map(<[usize]>::to_vec).collect()
}

pub(crate) fn image_batch(samples: &[&Sample], idx: &[usize]) -> Tensor {
    let mut data = Vec::with_capacity(idx.len() * 3072);
    for &i in idx {
        data.extend_from_slice(samples[i].image.data());
    }
    Tensor::new(vec![idx.len(), 3, 32, 32], data).expect("non-empty batch")
}

pub(crate) fn rows_of(t: &Tensor, idx: &[usize]) -> Tensor {
    let width = t.numel() / t.shape()[0];
    let mut shape = t.shape().to_vec();
    shape[0] = idx.len();
    let mut data = Vec::with_capacity(idx.len() * width);
    for &i in idx {
        data.extend_from_slice(&t.data()[i * width..(i + 1) * width]);
    }
    Tensor::new(shape, data).expect("non-empty batch")
}

pub(crate) fn check_finite(loss: f32, epoch: usize, step: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { epoch, step })
    }
}

/// One line of a regression loss log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

/// `epoch,loss` lines.
pub fn write_epoch_log(rows: &[EpochLoss], mut out: impl Write) -> std::io::Result<()> {
    for r in rows {
        writeln!(out, "{},{:.6}", r.epoch, r.loss)?;
    }
    Ok(())
}

/// Trailing moving average with window `w` (shorter at the start).
pub fn moving_average(values: &[f64], w: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}
