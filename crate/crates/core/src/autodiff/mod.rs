//! Reverse-mode automatic differentiation over dense tensors.
//!
//! Operations are recorded on a [`Tape`] as they execute. Calling
//! [`Tape::backward`] on a scalar walks the record in reverse and leaves a
//! gradient in every leaf created with [`Tape::param`].

mod activation;
mod conv;
mod linalg;
mod loss;
mod norm;
mod scalar;
mod shape;
mod tape;
mod tensor;

pub use activation::{sigmoid, Activation, LEAKY_SLOPE};
pub use loss::{softmax_rows, P_CLAMP};
pub use norm::{BatchNormMode, BatchStats, BN_EPS, BN_MOMENTUM};
pub use scalar::Scalar;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
