//! Face reconstruction by latent approximation and optimization, and aging
//! by switching the generator's condition.

mod objective;
mod report;

pub use objective::{
    age_swap, initial_approximation, optimize_identity_preserving, optimize_pixelwise, resolve_age,
    InitialApproximation, LatentFit, LATENT_BOUND,
};
pub use report::{reconstruct, write_report, ReconstructionMode, ReconstructionResult, ReportRow};
