use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::common::{adam_for, adam_update, check_finite, epoch_batches, image_batch};
use super::config::TrainConfig;
use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::models::{
    condition_tensor, discriminator_logits, generator_forward, init_params, Bound, ModelCheckpoint,
    Phase, LATENT_DIM,
};
use crate::optim::AdamConfig;
use crate::synth::{rng_for, AgeCategory, Corpus, Split, AGE_CATEGORIES};

const CGAN_STREAM: u64 = 0xc6a4;

/// One `epoch,step,loss_d,loss_g,acc_d` line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CganLogRow {
    pub epoch: usize,
    pub step: usize,
    pub loss_d: f32,
    pub loss_g: f32,
    /// Fraction of real and fake examples the discriminator classifies correctly.
    pub acc_d: f32,
}

pub fn write_cgan_log(rows: &[CganLogRow], mut out: impl Write) -> std::io::Result<()> {
    for r in rows {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6}",
            r.epoch, r.step, r.loss_d, r.loss_g, r.acc_d
        )?;
    }
    Ok(())
}

#[derive(Debug)]
pub struct CganRun {
    pub generator: ModelCheckpoint,
    pub discriminator: ModelCheckpoint,
    pub log: Vec<CganLogRow>,
    /// Set when a non-finite loss stopped training; the checkpoints hold the
    /// parameters from before the offending step.
    pub aborted: Option<Error>,
}

/// Latents `[n,64]` drawn from the standard normal.
pub fn sample_latents(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let data = (0..n * LATENT_DIM)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Tensor::new(vec![n, LATENT_DIM], data).expect("positive latent count")
}

pub fn sample_ages(rng: &mut ChaCha8Rng, n: usize) -> Vec<AgeCategory> {
    (0..n)
        .map(|_| AgeCategory::new(rng.random_range(0..AGE_CATEGORIES)).expect("in range"))
        .collect()
}

fn accuracy(real: &[f32], fake: &[f32]) -> f32 {
    let correct =
        real.iter().filter(|&&l| l > 0.0).count() + fake.iter().filter(|&&l| l < 0.0).count();
    correct as f32 / (real.len() + fake.len()) as f32
}

/// Alternate one discriminator and one generator ADAM step per batch over the
/// train split, with fresh `z ∼ N(0, I)` and uniform fake conditions.
pub fn train_age_cgan(corpus: &Corpus, cfg: &TrainConfig) -> Result<CganRun> {
    cfg.validate()?;
    let samples: Vec<_> = corpus.split(Split::Train).collect();
    for age in AgeCategory::all() {
        if samples.iter().filter(|s| s.age == age).count() < 2 {
            return Err(Error::InvalidArgument(format!(
                "fewer than two training images of age {age}"
            )));
        }
    }
    if samples.len() < cfg.batch_size {
        return Err(Error::InvalidArgument(
            "training split smaller than one batch".into(),
        ));
    }
    let mut g = init_params("generator", cfg.seed)?;
    let mut d = init_params("discriminator", cfg.seed)?;
    let adam = |lr| AdamConfig {
        lr,
        ..AdamConfig::default()
    };
    let mut g_opt = adam_for(&g, adam(cfg.lr));
    let mut d_opt = adam_for(&d, adam(cfg.lr_d));
    let mut rng = rng_for(cfg.seed, &[CGAN_STREAM]);
    let mut log = Vec::new();
    let b = cfg.batch_size;
    let ones = vec![1.0f32; b];
    let zeros = vec![0.0f32; b];

    for epoch in 1..=cfg.epochs {
        for (step, idx) in epoch_batches(samples.len(), b, &mut rng)
            .into_iter()
            .enumerate()
        {
            let step = step + 1;
            let real = image_batch(&samples, &idx);
            let real_ages: Vec<_> = idx.iter().map(|&i| samples[i].age).collect();
            let z = sample_latents(&mut rng, b);
            let fake_ages = sample_ages(&mut rng, b);

            // Discriminator step with the generator held fixed.
            let mut tape = Tape::new();
            let gp = Bound::new(&mut tape, &g, false);
            let dp = Bound::new(&mut tape, &d, true);
            let zv = tape.constant(z.clone());
            let yf = tape.constant(condition_tensor(&fake_ages));
            let fake = generator_forward(&mut tape, &gp, zv, yf, Phase::Train)?.out;
            let xr = tape.constant(real);
            let yr = tape.constant(condition_tensor(&real_ages));
            let lr_ = discriminator_logits(&mut tape, &dp, xr, yr)?;
            let lf = discriminator_logits(&mut tape, &dp, fake, yf)?;
            let acc_d = accuracy(tape.data(lr_), tape.data(lf));
            let loss_real = tape.bce_with_logits(lr_, &ones)?;
            let loss_fake = tape.bce_with_logits(lf, &zeros)?;
            let loss = tape.add(loss_real, loss_fake)?;
            let loss_d = tape.value(loss)?.item();
            if let Err(e) = check_finite(loss_d, epoch, step) {
                return Ok(aborted(g, d, log, e));
            }
            tape.backward(loss)?;
            let d_before = d.clone();
            adam_update(&mut d, &dp, &tape, &mut d_opt)?;
            drop(tape);

            // Generator step, non-saturating: maximize log D(G(z,ỹ),ỹ).
            let mut tape = Tape::new();
            let gp = Bound::new(&mut tape, &g, true);
            let dp = Bound::new(&mut tape, &d, false);
            let zv = tape.constant(z);
            let yf = tape.constant(condition_tensor(&fake_ages));
            let pass = generator_forward(&mut tape, &gp, zv, yf, Phase::Train)?;
            let lf = discriminator_logits(&mut tape, &dp, pass.out, yf)?;
            let loss = tape.bce_with_logits(lf, &ones)?;
            let loss_g = tape.value(loss)?.item();
            if let Err(e) = check_finite(loss_g, epoch, step) {
                return Ok(aborted(g, d_before, log, e));
            }
            tape.backward(loss)?;
            adam_update(&mut g, &gp, &tape, &mut g_opt)?;
            g.update_running_stats(&pass.stats)?;

            let row = CganLogRow {
                epoch,
                step,
                loss_d,
                loss_g,
                acc_d,
            };
            if step % cfg.log_interval == 0 {
                log::info!("cgan epoch {epoch} step {step}: loss_d {loss_d:.4} loss_g {loss_g:.4} acc_d {acc_d:.3}");
            }
            log.push(row);
        }
        log::debug!("cgan epoch {epoch} done");
    }
    for ckpt in [&mut g, &mut d] {
        ckpt.set_meta("epochs", cfg.epochs);
        ckpt.set_meta("seed", cfg.seed);
        if let Some(last) = log.last() {
            ckpt.set_meta("final_loss_d", format!("{:.6}", last.loss_d));
            ckpt.set_meta("final_loss_g", format!("{:.6}", last.loss_g));
        }
    }
    Ok(CganRun {
        generator: g,
        discriminator: d,
        log,
        aborted: None,
    })
}

fn aborted(g: ModelCheckpoint, d: ModelCheckpoint, log: Vec<CganLogRow>, e: Error) -> CganRun {
    log::error!("cgan training stopped: {e}");
    CganRun {
        generator: g,
        discriminator: d,
        log,
        aborted: Some(e),
    }
}

/// Mean discriminator accuracy per epoch.
pub fn epoch_accuracy(log: &[CganLogRow]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64, usize)> = Vec::new();
    for r in log {
        match out.last_mut() {
            Some((e, s, n)) if *e == r.epoch => {
                *s += r.acc_d as f64;
                *n += 1;
            }
            _ => out.push((r.epoch, r.acc_d as f64, 1)),
        }
    }
    out.into_iter().map(|(e, s, n)| (e, s / n as f64)).collect()
}
