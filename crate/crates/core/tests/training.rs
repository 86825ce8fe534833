use agecgan_core::autodiff::{Tape, Tensor};
use agecgan_core::models::{
    condition_tensor, discriminate, discriminator_logits, generate, init_params, Bound, LATENT_DIM,
};
use agecgan_core::synth::{generate_dataset, AgeCategory, Corpus};
use agecgan_core::training::{
    epoch_accuracy, fr_threshold, independent_pair_baseline, latent_error, train_age_cgan,
    train_age_estimator, train_encoder, train_fr, LatentPairs, Network, TrainConfig,
};
use agecgan_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_corpus() -> Corpus {
    generate_dataset(20, 1, 5).unwrap()
}

fn quick(net: Network, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        n_pairs: 400,
        ..TrainConfig::defaults(net)
    }
}

fn ages(n: usize, seed: u64) -> Vec<AgeCategory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| AgeCategory::new(rng.random_range(0..6)).unwrap())
        .collect()
}

#[test]
fn discriminator_loss_matches_log_likelihood() {
    let g = init_params("generator", 3).unwrap();
    let d = init_params("discriminator", 4).unwrap();
    let corpus = small_corpus();
    let real: Vec<_> = corpus.samples.iter().take(8).collect();
    let real_x = Tensor::new(
        vec![8, 3, 32, 32],
        real.iter()
            .flat_map(|s| s.image.data().iter().copied())
            .collect(),
    )
    .unwrap();
    let real_y: Vec<_> = real.iter().map(|s| s.age).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let z = Tensor::new(
        vec![8, LATENT_DIM],
        (0..8 * LATENT_DIM)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    let fake_y = ages(8, 10);
    let fake_x = generate(&g, &z, &fake_y).unwrap();

    let mut tape = Tape::<f64>::new();
    let dp = Bound::new(&mut tape, &d, false);
    let xr = tape.constant(real_x.cast());
    let yr = tape.constant(condition_tensor(&real_y));
    let xf = tape.constant(fake_x.cast());
    let yf = tape.constant(condition_tensor(&fake_y));
    let lr = discriminator_logits(&mut tape, &dp, xr, yr).unwrap();
    let lf = discriminator_logits(&mut tape, &dp, xf, yf).unwrap();
    let a = tape.bce_with_logits(lr, &[1.0; 8]).unwrap();
    let b = tape.bce_with_logits(lf, &[0.0; 8]).unwrap();
    let loss = tape.add(a, b).unwrap();
    let loss = tape.value(loss).unwrap().item();

    let pr = discriminate(&d, &real_x, &real_y).unwrap();
    let pf = discriminate(&d, &fake_x, &fake_y).unwrap();
    let oracle = -pr.iter().map(|&p| (p as f64).ln()).sum::<f64>() / 8.0
        - pf.iter().map(|&p| (1.0 - p as f64).ln()).sum::<f64>() / 8.0;
    assert!((loss - oracle).abs() < 1e-6, "loss {loss} oracle {oracle}");
}

#[test]
fn cgan_training_is_deterministic_and_logged() {
    let corpus = small_corpus();
    let cfg = quick(Network::Cgan, 2);
    let a = train_age_cgan(&corpus, &cfg).unwrap();
    let b = train_age_cgan(&corpus, &cfg).unwrap();
    assert!(a.aborted.is_none());
    let n_train = corpus.split(agecgan_core::synth::Split::Train).count();
    assert_eq!(a.log.len(), 2 * (n_train / 16));
    assert_eq!(a.log, b.log);
    assert_eq!(a.generator.blob(), b.generator.blob());
    assert!(a
        .log
        .iter()
        .all(|r| r.loss_d.is_finite() && r.loss_g.is_finite()));
    assert!(a.log.iter().all(|r| (0.0..=1.0).contains(&r.acc_d)));
    assert_eq!(epoch_accuracy(&a.log).len(), 2);
    assert_eq!(a.generator.meta("epochs"), Some("2"));
}

#[test]
fn zero_epochs_rejected() {
    let corpus = small_corpus();
    for net in Network::ALL {
        let cfg = quick(net, 0);
        let err = match net {
            Network::Cgan => train_age_cgan(&corpus, &cfg).map(|_| ()),
            Network::Encoder => {
                train_encoder(&init_params("generator", 1).unwrap(), &cfg).map(|_| ())
            }
            Network::Fr => train_fr(&corpus, &cfg).map(|_| ()),
            Network::Age => train_age_estimator(&corpus, &cfg).map(|_| ()),
        }
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{net}: {err}");
    }
}

#[test]
fn encoder_beats_independent_pair_baseline() {
    let g = init_params("generator", 1).unwrap();
    let run = train_encoder(&g, &quick(Network::Encoder, 3)).unwrap();
    assert_eq!(run.n_train + run.n_heldout, 400);
    assert_eq!(run.n_heldout, 40);
    assert!(run.heldout_loss.is_finite() && run.initial_heldout_loss.is_finite());
    assert!(run.heldout_loss < independent_pair_baseline());
    let total: f64 = run.age_frequencies.iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert_eq!(run.log.len(), 3);
}

#[test]
fn untrained_encoder_sits_near_half_the_baseline() {
    // A freshly initialized encoder outputs nearly zero, so its error is
    // E‖z‖² = 64, not the pair baseline of 128.
    let g = init_params("generator", 6).unwrap();
    let e = init_params("encoder", 7).unwrap();
    let pairs = LatentPairs::sample(&g, 1000, 8).unwrap();
    let all: Vec<usize> = (0..pairs.len()).collect();
    let ratio = latent_error(&e, &pairs, &all).unwrap() / independent_pair_baseline();
    assert!((ratio - 0.5).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn oracles_train_and_calibrate() {
    let corpus = small_corpus();
    let fr = train_fr(&corpus, &quick(Network::Fr, 2)).unwrap();
    assert!(fr.tau.is_finite() && fr.tau > 0.0 && fr.tau <= 2.0);
    assert!((fr_threshold(&fr.fr).unwrap() - fr.tau).abs() < 1e-6);
    assert!((0.0..=1.0).contains(&fr.heldout_accuracy));
    let age = train_age_estimator(&corpus, &quick(Network::Age, 2)).unwrap();
    let n: usize = age.confusion.iter().flatten().sum();
    assert_eq!(n, corpus.split(agecgan_core::synth::Split::Test).count());
    assert!((0.0..=1.0).contains(&age.heldout_top1));
    assert!(age.log.iter().all(|r| r.loss.is_finite()));
}
