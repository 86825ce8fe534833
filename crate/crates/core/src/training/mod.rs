//! Adversarial training of the age-conditional GAN, encoder regression, and
//! the identity and age oracles.

mod cgan;
mod common;
mod config;
mod encoder;
mod oracles;

pub use cgan::{
    epoch_accuracy, sample_ages, sample_latents, train_age_cgan, write_cgan_log, CganLogRow,
    CganRun,
};
pub use common::{moving_average, write_epoch_log, EpochLoss};
pub use config::{Network, Settings, TrainConfig};
pub use encoder::{
    independent_pair_baseline, latent_error, train_encoder, EncoderRun, LatentPairs,
    HELDOUT_FRACTION,
};
pub use oracles::{
    equal_error_threshold, euclidean, fr_threshold, train_age_estimator, train_fr,
    verification_accuracy, verification_pairs, AgeRun, FrRun, ScoredPair, CLASSIFIER_SCALE,
};
