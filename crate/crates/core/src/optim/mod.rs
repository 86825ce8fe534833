//! Optimizers: ADAM for network weights, bounded L-BFGS for latent vectors.

mod adam;
mod lbfgsb;
mod line_search;

pub use adam::{AdamConfig, AdamState, ParamGrad};
pub use lbfgsb::{
    lbfgsb_minimize, write_trace, Bounds, LbfgsbConfig, LbfgsbResult, LbfgsbState, Termination,
    TraceRow,
};
pub use line_search::{backtracking_line_search, LineSearchConfig, LineSearchOutcome};

/// Objective value and gradient at a point.
pub type Evaluation = (f64, Vec<f64>);
