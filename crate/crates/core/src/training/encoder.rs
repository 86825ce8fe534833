use super::cgan::{sample_ages, sample_latents};
use super::common::{adam_for, adam_update, check_finite, epoch_batches, rows_of, EpochLoss};
use super::config::TrainConfig;
use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::models::{
    encode, encoder_forward, generate, init_params, Bound, ModelCheckpoint, LATENT_DIM,
};
use crate::optim::AdamConfig;
use crate::synth::{rng_for, AgeCategory, AGE_CATEGORIES};

const ENCODER_STREAM: u64 = 0xe4c0;
pub const HELDOUT_FRACTION: f64 = 0.1;

/// Synthetic `(z, y, G(z, y))` triples.
pub struct LatentPairs {
    pub z: Tensor,
    pub ages: Vec<AgeCategory>,
    pub images: Tensor,
}

impl LatentPairs {
    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }

    /// Draw `z ∼ N(0, I)`, `y ∼ Uniform{0..5}` and render through `g`.
    pub fn sample(g: &ModelCheckpoint, n: usize, seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, &[ENCODER_STREAM]);
        let z = sample_latents(&mut rng, n);
        let ages = sample_ages(&mut rng, n);
        let images = generate(g, &z, &ages)?;
        Ok(Self { z, ages, images })
    }

    pub fn age_frequencies(&self) -> [f64; AGE_CATEGORIES] {
        let mut f = [0.0; AGE_CATEGORIES];
        for a in &self.ages {
            f[a.index()] += 1.0 / self.ages.len() as f64;
        }
        f
    }
}

/// Mean `‖E(x) − z‖²` over the rows `idx` of `pairs`.
pub fn latent_error(e: &ModelCheckpoint, pairs: &LatentPairs, idx: &[usize]) -> Result<f64> {
    let est = encode(e, &rows_of(&pairs.images, idx))?;
    let z = rows_of(&pairs.z, idx);
    let total: f64 = est
        .data()
        .iter()
        .zip(z.data())
        .map(|(a, b)| ((a - b) as f64).powi(2))
        .sum();
    Ok(total / idx.len() as f64)
}

pub struct EncoderRun {
    pub encoder: ModelCheckpoint,
    pub log: Vec<EpochLoss>,
    /// Mean `‖E(x) − z‖²` on the held-out pairs after training.
    pub heldout_loss: f64,
    /// The same quantity before the first update.
    pub initial_heldout_loss: f64,
    pub age_frequencies: [f64; AGE_CATEGORIES],
    pub n_train: usize,
    pub n_heldout: usize,
}

/// Regress `z` from `G(z, y)` over `cfg.n_pairs` fresh samples; the last 10%
/// of pairs are held out.
pub fn train_encoder(g: &ModelCheckpoint, cfg: &TrainConfig) -> Result<EncoderRun> {
    cfg.validate()?;
    let n_heldout = (cfg.n_pairs as f64 * HELDOUT_FRACTION).round() as usize;
    let n_train = cfg.n_pairs - n_heldout;
    if n_train < cfg.batch_size || n_heldout == 0 {
        return Err(Error::InvalidArgument(format!(
            "{} pairs are too few to train and hold out",
            cfg.n_pairs
        )));
    }
    let pairs = LatentPairs::sample(g, cfg.n_pairs, cfg.seed)?;
    let heldout: Vec<usize> = (n_train..cfg.n_pairs).collect();
    let mut e = init_params("encoder", cfg.seed)?;
    let initial_heldout_loss = latent_error(&e, &pairs, &heldout)?;
    let mut opt = adam_for(
        &e,
        AdamConfig {
            lr: cfg.lr,
            beta1: 0.9,
            ..AdamConfig::default()
        },
    );
    let mut rng = rng_for(cfg.seed, &[ENCODER_STREAM, 1]);
    let mut log = Vec::new();
    for epoch in 1..=cfg.epochs {
        let mut sum = 0.0;
        let batches = epoch_batches(n_train, cfg.batch_size, &mut rng);
        for (step, idx) in batches.iter().enumerate() {
            let mut tape = Tape::new();
            let p = Bound::new(&mut tape, &e, true);
            let x = tape.constant(rows_of(&pairs.images, idx));
            let z = tape.constant(rows_of(&pairs.z, idx));
            let est = encoder_forward(&mut tape, &p, x)?;
            let sq = tape.l2_sq(est, z)?;
            let loss = tape.scale(sq, 1.0 / idx.len() as f32)?;
            let value = tape.value(loss)?.item();
            check_finite(value, epoch, step + 1)?;
            tape.backward(loss)?;
            adam_update(&mut e, &p, &tape, &mut opt)?;
            sum += value as f64;
        }
        let mean = sum / batches.len() as f64;
        log::info!("encoder epoch {epoch}: loss {mean:.4}");
        log.push(EpochLoss { epoch, loss: mean });
    }
    let heldout_loss = latent_error(&e, &pairs, &heldout)?;
    e.set_meta("epochs", cfg.epochs);
    e.set_meta("seed", cfg.seed);
    e.set_meta("n_pairs", cfg.n_pairs);
    e.set_meta("heldout_loss", format!("{heldout_loss:.6}"));
    Ok(EncoderRun {
        encoder: e,
        log,
        heldout_loss,
        initial_heldout_loss,
        age_frequencies: pairs.age_frequencies(),
        n_train,
        n_heldout,
    })
}

/// Independent-pair baseline `E‖z₁ − z₂‖² = 2·d`.
pub const fn independent_pair_baseline() -> f64 {
    2.0 * LATENT_DIM as f64
}
