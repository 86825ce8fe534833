//! Evaluation protocols: identity verification of reconstructions, age
//! control of the generator, and latent/condition disentanglement.

mod metrics;
mod report;

pub use metrics::{
    age_consistency_score, age_swap_scores, disentanglement_report, fr_verification_score,
    AgeConsistency, AgeSwapScores, Disentanglement, REFERENCE_AGE_GAP,
};
pub use report::{EvalReport, Metric, EVAL_HEADER};
