use super::lbfgsb::Bounds;
use super::Evaluation;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchConfig {
    /// Sufficient-decrease constant of the Armijo test.
    pub c1: f64,
    pub shrink: f64,
    pub initial_step: f64,
    pub max_halvings: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            shrink: 0.5,
            initial_step: 1.0,
            max_halvings: 30,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LineSearchOutcome {
    /// Accepted step length; `0.0` on failure.
    pub alpha: f64,
    pub success: bool,
    /// The supplied direction was not a descent direction and was replaced
    /// by the negative gradient.
    pub direction_reset: bool,
    /// Accepted point, its value and gradient (the start point on failure).
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub evaluations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Armijo backtracking along `direction`, projecting every trial point into
/// `bounds`: accept the first `α = α0·shrinkᵏ` with
/// `f(P(x + αd)) ≤ f(x) + c1·α·⟨g, d⟩`.
pub fn backtracking_line_search<F>(
    objective: &mut F,
    x: &[f64],
    fx: f64,
    grad: &[f64],
    direction: &[f64],
    bounds: &Bounds,
    config: &LineSearchConfig,
) -> Result<LineSearchOutcome>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    let mut d = direction.to_vec();
    let mut slope = dot(grad, &d);
    let direction_reset = !(slope < 0.0);
    if direction_reset {
        d = grad.iter().map(|g| -g).collect();
        slope = dot(grad, &d);
    }

    let mut alpha = config.initial_step;
    let mut evaluations = 0;
    if slope < 0.0 {
        for _ in 0..=config.max_halvings {
            let trial: Vec<f64> = x
                .iter()
                .zip(&d)
                .enumerate()
                .map(|(i, (xi, di))| bounds.project(i, xi + alpha * di))
                .collect();
            let (ft, gt) = objective(&trial)?;
            evaluations += 1;
            if ft.is_finite() && ft <= fx + config.c1 * alpha * slope {
                return Ok(LineSearchOutcome {
                    alpha,
                    success: true,
                    direction_reset,
                    x: trial,
                    f: ft,
                    grad: gt,
                    evaluations,
                });
            }
            alpha *= config.shrink;
        }
    }
    Ok(LineSearchOutcome {
        alpha: 0.0,
        success: false,
        direction_reset,
        x: x.to_vec(),
        f: fx,
        grad: grad.to_vec(),
        evaluations,
    })
}
