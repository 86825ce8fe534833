use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::common::{adam_for, adam_update, check_finite, epoch_batches, image_batch, EpochLoss};
use super::config::TrainConfig;
use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::models::{
    age_logits, embed, embed_forward, estimate_age, init_params, stack_images, top1, Bound,
    ModelCheckpoint, EMBED_DIM,
};
use crate::optim::AdamConfig;
use crate::synth::{rng_for, Corpus, Sample, Split, AGE_CATEGORIES};

const FR_STREAM: u64 = 0xf12;
const AGE_STREAM: u64 = 0xa6e;
/// Logit scale of the identity classifier on unit embeddings.
pub const CLASSIFIER_SCALE: f32 = 10.0;
pub const CALIBRATION_PAIRS: usize = 3000;

fn regression_adam(lr: f64) -> AdamConfig {
    AdamConfig {
        lr,
        beta1: 0.9,
        ..AdamConfig::default()
    }
}

pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| ((x - y) as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Embedding distance and whether the two images share an identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredPair {
    pub distance: f64,
    pub genuine: bool,
}

/// `n` genuine and `n` impostor pairs drawn from `samples` with their
/// embedding distances.
pub fn verification_pairs(
    embeddings: &Tensor,
    samples: &[&Sample],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ScoredPair>> {
    let m = samples.len();
    let row = |i: usize| &embeddings.data()[i * EMBED_DIM..(i + 1) * EMBED_DIM];
    let mut by_identity: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, s) in samples.iter().enumerate() {
        by_identity.entry(s.identity).or_default().push(i);
    }
    if by_identity.len() < 2 || by_identity.values().all(|v| v.len() < 2) {
        return Err(Error::InvalidArgument(
            "need two identities and a repeated identity".into(),
        ));
    }
    let mut out = Vec::with_capacity(2 * n);
    while out.len() < n {
        let i = rng.random_range(0..m);
        let same = &by_identity[&samples[i].identity];
        if same.len() < 2 {
            continue;
        }
        let j = same[rng.random_range(0..same.len())];
        if j != i {
            out.push(ScoredPair {
                distance: euclidean(row(i), row(j)),
                genuine: true,
            });
        }
    }
    while out.len() < 2 * n {
        let (i, j) = (rng.random_range(0..m), rng.random_range(0..m));
        if samples[i].identity != samples[j].identity {
            out.push(ScoredPair {
                distance: euclidean(row(i), row(j)),
                genuine: false,
            });
        }
    }
    Ok(out)
}

/// Threshold where false rejections of genuine pairs and false acceptances
/// of impostors balance. Pairs with distance `< τ` are accepted.
pub fn equal_error_threshold(pairs: &[ScoredPair]) -> f64 {
    let mut candidates: Vec<f64> = pairs.iter().map(|p| p.distance).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let genuine = pairs.iter().filter(|p| p.genuine).count().max(1) as f64;
    let impostor = pairs.iter().filter(|p| !p.genuine).count().max(1) as f64;
    let mut best = (f64::INFINITY, 1.0);
    let mut prev = 0.0;
    for &c in candidates.iter().chain(std::iter::once(&2.0)) {
        let tau = 0.5 * (prev + c);
        prev = c;
        let frr = pairs
            .iter()
            .filter(|p| p.genuine && p.distance >= tau)
            .count() as f64
            / genuine;
        let far = pairs
            .iter()
            .filter(|p| !p.genuine && p.distance < tau)
            .count() as f64
            / impostor;
        let gap = (frr - far).abs();
        if gap < best.0 {
            best = (gap, tau);
        }
    }
    best.1.clamp(1e-6, 2.0 - 1e-6)
}

pub fn verification_accuracy(pairs: &[ScoredPair], tau: f64) -> f64 {
    let correct = pairs
        .iter()
        .filter(|p| (p.distance < tau) == p.genuine)
        .count();
    correct as f64 / pairs.len() as f64
}

pub struct FrRun {
    pub fr: ModelCheckpoint,
    pub tau: f64,
    pub log: Vec<EpochLoss>,
    /// Accuracy on balanced pairs of held-out identities at `tau`.
    pub heldout_accuracy: f64,
    /// Mean cosine similarity within and across held-out identities.
    pub heldout_cosine_within: f64,
    pub heldout_cosine_across: f64,
}

/// Identity classification over train identities with a scaled linear head
/// on the unit embedding; the head is discarded afterwards.
pub fn train_fr(corpus: &Corpus, cfg: &TrainConfig) -> Result<FrRun> {
    cfg.validate()?;
    let samples: Vec<&Sample> = corpus.split(Split::Train).collect();
    let ids = corpus.identities(Split::Train);
    if ids.len() < 2 || samples.len() < cfg.batch_size {
        return Err(Error::InvalidArgument(
            "identity classification needs two identities and a full batch".into(),
        ));
    }
    let class_of = |identity: usize| ids.binary_search(&identity).expect("train identity");
    let mut fr = init_params("fr", cfg.seed)?;
    let mut head = init_head(ids.len(), cfg.seed);
    let mut opt = adam_for(&fr, regression_adam(cfg.lr));
    let mut head_opt = crate::optim::AdamState::new(regression_adam(cfg.lr), [head.numel()]);
    let mut rng = rng_for(cfg.seed, &[FR_STREAM]);
    let mut log = Vec::new();
    for epoch in 1..=cfg.epochs {
        let batches = epoch_batches(samples.len(), cfg.batch_size, &mut rng);
        let mut sum = 0.0;
        for (step, idx) in batches.iter().enumerate() {
            let labels: Vec<usize> = idx.iter().map(|&i| class_of(samples[i].identity)).collect();
            let mut tape = Tape::new();
            let p = Bound::new(&mut tape, &fr, true);
            let w = tape.param(head.clone());
            let x = tape.constant(image_batch(&samples, idx));
            let e = embed_forward(&mut tape, &p, x)?;
            let logits = tape.matmul(e, w)?;
            let logits = tape.scale(logits, CLASSIFIER_SCALE)?;
            let loss = tape.softmax_xent(logits, &labels)?;
            let value = tape.value(loss)?.item();
            check_finite(value, epoch, step + 1)?;
            tape.backward(loss)?;
            adam_update(&mut fr, &p, &tape, &mut opt)?;
            let g = tape.grad(w).expect("head gradient").to_vec();
            head_opt.step(&mut [crate::optim::ParamGrad {
                name: "head",
                value: head.data_mut(),
                grad: &g,
            }])?;
            sum += value as f64;
        }
        let mean = sum / batches.len() as f64;
        log::info!("fr epoch {epoch}: loss {mean:.4}");
        log.push(EpochLoss { epoch, loss: mean });
    }

    let train_emb = embed(&fr, &stack_images(samples.iter().map(|s| &s.image))?)?;
    let calib = verification_pairs(&train_emb, &samples, CALIBRATION_PAIRS, &mut rng)?;
    let tau = equal_error_threshold(&calib);
    let test: Vec<&Sample> = corpus.split(Split::Test).collect();
    let (heldout_accuracy, within, across) = if test.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let test_emb = embed(&fr, &stack_images(test.iter().map(|s| &s.image))?)?;
        let pairs = verification_pairs(&test_emb, &test, CALIBRATION_PAIRS, &mut rng)?;
        let cos = |genuine: bool| {
            let sel: Vec<_> = pairs.iter().filter(|p| p.genuine == genuine).collect();
            sel.iter()
                .map(|p| 1.0 - p.distance * p.distance / 2.0)
                .sum::<f64>()
                / sel.len() as f64
        };
        (verification_accuracy(&pairs, tau), cos(true), cos(false))
    };
    fr.set_meta("tau", format!("{tau:.6}"));
    fr.set_meta("epochs", cfg.epochs);
    fr.set_meta("seed", cfg.seed);
    Ok(FrRun {
        fr,
        tau,
        log,
        heldout_accuracy,
        heldout_cosine_within: within,
        heldout_cosine_across: across,
    })
}

fn init_head(classes: usize, seed: u64) -> Tensor {
    use rand_distr::{Distribution, Normal};
    let mut rng = rng_for(seed, &[FR_STREAM, 1]);
    let normal = Normal::new(0.0f32, 0.02).expect("valid std");
    let data = (0..EMBED_DIM * classes)
        .map(|_| normal.sample(&mut rng))
        .collect();
    Tensor::new(vec![EMBED_DIM, classes], data).expect("positive head shape")
}

/// Stored verification threshold of a trained FR checkpoint.
pub fn fr_threshold(fr: &ModelCheckpoint) -> Result<f64> {
    fr.meta("tau")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::InvalidArgument("FR checkpoint carries no calibrated `tau`".into()))
}

pub struct AgeRun {
    pub estimator: ModelCheckpoint,
    pub log: Vec<EpochLoss>,
    pub heldout_top1: f64,
    /// Mean absolute difference between predicted and true category index.
    pub heldout_mae: f64,
    /// `confusion[true][predicted]` counts on the held-out split.
    pub confusion: [[usize; AGE_CATEGORIES]; AGE_CATEGORIES],
}

pub fn train_age_estimator(corpus: &Corpus, cfg: &TrainConfig) -> Result<AgeRun> {
    cfg.validate()?;
    let samples: Vec<&Sample> = corpus.split(Split::Train).collect();
    if samples.len() < cfg.batch_size {
        return Err(Error::InvalidArgument(
            "training split smaller than one batch".into(),
        ));
    }
    let mut a = init_params("age", cfg.seed)?;
    let mut opt = adam_for(&a, regression_adam(cfg.lr));
    let mut rng = rng_for(cfg.seed, &[AGE_STREAM]);
    let mut log = Vec::new();
    for epoch in 1..=cfg.epochs {
        let batches = epoch_batches(samples.len(), cfg.batch_size, &mut rng);
        let mut sum = 0.0;
        for (step, idx) in batches.iter().enumerate() {
            let labels: Vec<usize> = idx.iter().map(|&i| samples[i].age.index()).collect();
            let mut tape = Tape::new();
            let p = Bound::new(&mut tape, &a, true);
            let x = tape.constant(image_batch(&samples, idx));
            let logits = age_logits(&mut tape, &p, x)?;
            let loss = tape.softmax_xent(logits, &labels)?;
            let value = tape.value(loss)?.item();
            check_finite(value, epoch, step + 1)?;
            tape.backward(loss)?;
            adam_update(&mut a, &p, &tape, &mut opt)?;
            sum += value as f64;
        }
        let mean = sum / batches.len() as f64;
        log::info!("age epoch {epoch}: loss {mean:.4}");
        log.push(EpochLoss { epoch, loss: mean });
    }
    let test: Vec<&Sample> = corpus.split(Split::Test).collect();
    let mut confusion = [[0; AGE_CATEGORIES]; AGE_CATEGORIES];
    let (mut top1_acc, mut mae) = (f64::NAN, f64::NAN);
    if !test.is_empty() {
        let probs = estimate_age(&a, &stack_images(test.iter().map(|s| &s.image))?)?;
        let pred = top1(&probs);
        for (s, &p) in test.iter().zip(&pred) {
            confusion[s.age.index()][p] += 1;
        }
        let n = test.len() as f64;
        top1_acc = test
            .iter()
            .zip(&pred)
            .filter(|(s, &p)| s.age.index() == p)
            .count() as f64
            / n;
        mae = test
            .iter()
            .zip(&pred)
            .map(|(s, &p)| (s.age.index() as f64 - p as f64).abs())
            .sum::<f64>()
            / n;
    }
    a.set_meta("epochs", cfg.epochs);
    a.set_meta("seed", cfg.seed);
    a.set_meta("heldout_top1", format!("{top1_acc:.6}"));
    Ok(AgeRun {
        estimator: a,
        log,
        heldout_top1: top1_acc,
        heldout_mae: mae,
        confusion,
    })
}
