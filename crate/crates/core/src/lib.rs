//! Face aging with an age-conditional GAN.
//!
//! An input face is inverted to a latent vector (encoder estimate, then
//! bounded quasi-Newton refinement of either a pixel or an identity-embedding
//! objective) and re-rendered under a different age condition.

pub mod autodiff;
pub mod error;
pub mod eval;
pub mod inversion;
pub mod models;
pub mod optim;
pub mod pipeline;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
