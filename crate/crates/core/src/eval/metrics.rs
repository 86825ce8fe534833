use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::inversion::age_swap;
use crate::models::{
    embed, estimate_age, generate, stack_images, top1, ModelCheckpoint, EMBED_DIM, LATENT_DIM,
};
use crate::synth::{rng_for, AgeCategory, Sample, AGE_CATEGORIES};
use crate::training::{euclidean, sample_latents};

/// Reference relative drop of age accuracy on generated faces, reported alongside the measured gap.
pub const REFERENCE_AGE_GAP: f64 = 0.17;

const AGE_STREAM: u64 = 0xa9e5;
const PROBE_STREAM: u64 = 0xd15e;

/// Fraction of `(original, reconstruction)` pairs whose embedding distance
/// is below `tau`.
pub fn fr_verification_score(
    fr: &ModelCheckpoint,
    pairs: &[(&Tensor, &Tensor)],
    tau: f64,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "verification needs at least one pair".into(),
        ));
    }
    let a = embed(fr, &stack_images(pairs.iter().map(|p| p.0))?)?;
    let b = embed(fr, &stack_images(pairs.iter().map(|p| p.1))?)?;
    let accepted = a
        .data()
        .chunks(EMBED_DIM)
        .zip(b.data().chunks(EMBED_DIM))
        .filter(|(x, y)| euclidean(x, y) < tau)
        .count();
    Ok(accepted as f64 / pairs.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgeConsistency {
    /// Top-1 agreement of the age oracle with the generator's condition.
    pub acc_generated: f64,
    /// Top-1 accuracy of the age oracle on held-out rendered faces.
    pub acc_real: f64,
    /// `(acc_real − acc_generated) / acc_real`.
    pub relative_gap: f64,
    pub n: usize,
}

/// Score the age oracle on `n` generated faces with balanced conditions and
/// on `n` real faces drawn from `real`.
pub fn age_consistency_score(
    g: &ModelCheckpoint,
    a: &ModelCheckpoint,
    real: &[&Sample],
    n: usize,
    seed: u64,
) -> Result<AgeConsistency> {
    if n < 10 * AGE_CATEGORIES {
        return Err(Error::InvalidArgument(format!(
            "n = {n} is below 60 (ten per category)"
        )));
    }
    if real.is_empty() {
        return Err(Error::InvalidArgument("no real images to score".into()));
    }
    let mut rng = rng_for(seed, &[AGE_STREAM]);
    let z = sample_latents(&mut rng, n);
    let mut ages: Vec<AgeCategory> = (0..n)
        .map(|i| AgeCategory::new(i % AGE_CATEGORIES).expect("in range"))
        .collect();
    ages.shuffle(&mut rng);
    let pred = top1(&estimate_age(a, &generate(g, &z, &ages)?)?);
    let acc_generated = agreement(&pred, ages.iter().map(|a| a.index()));

    let mut order: Vec<usize> = (0..real.len()).collect();
    order.shuffle(&mut rng);
    let chosen: Vec<&Sample> = (0..n).map(|i| real[order[i % real.len()]]).collect();
    let pred = top1(&estimate_age(
        a,
        &stack_images(chosen.iter().map(|s| &s.image))?,
    )?);
    let acc_real = agreement(&pred, chosen.iter().map(|s| s.age.index()));
    Ok(AgeConsistency {
        acc_generated,
        acc_real,
        relative_gap: (acc_real - acc_generated) / acc_real,
        n,
    })
}

fn agreement(pred: &[usize], truth: impl Iterator<Item = usize>) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(p, t)| **p == *t).count();
    hits as f64 / pred.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disentanglement {
    /// Mean `‖FR(G(z, y₁)) − FR(G(z, y₂))‖`, `y₁ ≠ y₂`.
    pub fixed_z: f64,
    /// Mean `‖FR(G(z₁, y)) − FR(G(z₂, y))‖`.
    pub varying_z: f64,
    pub n_probes: usize,
}

impl Disentanglement {
    pub fn holds(&self) -> bool {
        self.fixed_z < self.varying_z
    }
}

pub fn disentanglement_report(
    g: &ModelCheckpoint,
    fr: &ModelCheckpoint,
    n_probes: usize,
    seed: u64,
) -> Result<Disentanglement> {
    if n_probes < 50 {
        return Err(Error::InvalidArgument(format!(
            "n_probes = {n_probes} is below 50"
        )));
    }
    let mut rng = rng_for(seed, &[PROBE_STREAM]);
    // Rows: [z, y1], [z, y2], [z1, y], [z2, y] per probe.
    let z = sample_latents(&mut rng, 3 * n_probes);
    let zd = z.data();
    let mut latents = Vec::with_capacity(4 * n_probes * LATENT_DIM);
    let mut ages = Vec::with_capacity(4 * n_probes);
    for p in 0..n_probes {
        let row = |k: usize| &zd[(3 * p + k) * LATENT_DIM..(3 * p + k + 1) * LATENT_DIM];
        let y1 = rng.random_range(0..AGE_CATEGORIES);
        let y2 = (y1 + rng.random_range(1..AGE_CATEGORIES)) % AGE_CATEGORIES;
        let y = rng.random_range(0..AGE_CATEGORIES);
        for (k, age) in [(0, y1), (0, y2), (1, y), (2, y)] {
            latents.extend_from_slice(row(k));
            ages.push(AgeCategory::new(age).expect("in range"));
        }
    }
    let latents = Tensor::new(vec![4 * n_probes, LATENT_DIM], latents)?;
    let e = embed(fr, &generate(g, &latents, &ages)?)?;
    let row = |i: usize| &e.data()[i * EMBED_DIM..(i + 1) * EMBED_DIM];
    let (mut fixed, mut varying) = (0.0, 0.0);
    for p in 0..n_probes {
        fixed += euclidean(row(4 * p), row(4 * p + 1));
        varying += euclidean(row(4 * p + 2), row(4 * p + 3));
    }
    Ok(Disentanglement {
        fixed_z: fixed / n_probes as f64,
        varying_z: varying / n_probes as f64,
        n_probes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgeSwapScores {
    /// Fraction of swaps still verified as the original identity.
    pub retention: f64,
    /// Fraction of swaps whose estimated age equals the target.
    pub age_agreement: f64,
    pub n_swaps: usize,
}

/// Swap every latent to each of the five other categories; verify against
/// the original face and check the target age.
pub fn age_swap_scores(
    g: &ModelCheckpoint,
    fr: &ModelCheckpoint,
    a: &ModelCheckpoint,
    tau: f64,
    items: &[(&Tensor, &[f32], AgeCategory)],
) -> Result<AgeSwapScores> {
    if items.is_empty() {
        return Err(Error::InvalidArgument("no reconstructions to age".into()));
    }
    let mut originals = Vec::new();
    let mut swapped = Vec::new();
    let mut targets = Vec::new();
    for &(x, z, y0) in items {
        for target in AgeCategory::all().filter(|&t| t != y0) {
            originals.push(x);
            swapped.push(age_swap(g, z, target)?);
            targets.push(target.index());
        }
    }
    let pairs: Vec<(&Tensor, &Tensor)> = originals.iter().copied().zip(swapped.iter()).collect();
    let retention = fr_verification_score(fr, &pairs, tau)?;
    let pred = top1(&estimate_age(a, &stack_images(swapped.iter())?)?);
    Ok(AgeSwapScores {
        retention,
        age_agreement: agreement(&pred, targets.into_iter()),
        n_swaps: swapped.len(),
    })
}
