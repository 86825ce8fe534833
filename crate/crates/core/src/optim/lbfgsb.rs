//! Projected limited-memory BFGS with box constraints.
//!
//! Each iteration fixes the coordinates sitting on a bound with the gradient
//! pushing outward, runs the two-loop recursion on the remaining free
//! gradient, and backtracks along the resulting direction with every trial
//! point projected into the box. A curvature pair with `⟨s, y⟩ ≤ 1e-10` is
//! discarded together with the rest of the history, so the next direction is
//! a scaled steepest-descent step.

use std::collections::VecDeque;
use std::io::Write;

use super::line_search::{backtracking_line_search, LineSearchConfig};
use super::Evaluation;
use crate::error::{Error, Result};

const CURVATURE_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidArgument(
                "bounds need lo <= hi per coordinate".into(),
            ));
        }
        Ok(Self { lo, hi })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn project(&self, i: usize, v: f64) -> f64 {
        v.max(self.lo[i]).min(self.hi[i])
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(i, &v)| v >= self.lo[i] && v <= self.hi[i])
    }

    /// Infinity norm of `P(x − g) − x`.
    pub fn projected_gradient_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        x.iter()
            .zip(g)
            .enumerate()
            .map(|(i, (&xi, &gi))| (self.project(i, xi - gi) - xi).abs())
            .fold(0.0, f64::max)
    }

    /// Coordinate is pinned: on a bound with the gradient pointing out of the box.
    fn pinned(&self, i: usize, x: f64, g: f64) -> bool {
        (x <= self.lo[i] && g > 0.0) || (x >= self.hi[i] && g < 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsbConfig {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop once the projected-gradient infinity norm drops below this.
    pub tol: f64,
    pub line_search: LineSearchConfig,
}

impl Default for LbfgsbConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 100,
            tol: 1e-5,
            line_search: LineSearchConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub f: f64,
    /// Projected-gradient infinity norm.
    pub gnorm: f64,
    pub alpha: f64,
    /// The quasi-Newton direction failed and a projected-gradient step was taken.
    pub fallback: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct LbfgsbResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub trace: Vec<TraceRow>,
}

impl LbfgsbResult {
    pub fn f_init(&self) -> f64 {
        self.trace[0].f
    }

    pub fn final_gnorm(&self) -> f64 {
        self.trace.last().map(|r| r.gnorm).unwrap_or(f64::NAN)
    }

    pub fn fallbacks(&self) -> usize {
        self.trace.iter().filter(|r| r.fallback).count()
    }
}

/// Curvature history and box for one optimization problem.
#[derive(Clone, Debug)]
pub struct LbfgsbState {
    pub memory: usize,
    pub bounds: Bounds,
    pub iteration: usize,
    history: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl LbfgsbState {
    pub fn new(memory: usize, bounds: Bounds) -> Self {
        Self {
            memory,
            bounds,
            iteration: 0,
            history: VecDeque::with_capacity(memory),
        }
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    pub fn clear_history(&mut self) {
        self.history.clear();
    }

    /// Record `(s, y)` if it satisfies the curvature condition.
    pub fn push_pair(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        if dot(&s, &y) <= CURVATURE_FLOOR || self.memory == 0 {
            return false;
        }
        if self.history.len() == self.memory {
            self.history.pop_front();
        }
        self.history.push_back((s, y));
        true
    }

    /// `−H·g` by the two-loop recursion, with `H₀ = γI`, `γ = ⟨s,y⟩/⟨y,y⟩`
    /// of the newest pair (`γ = 1` with no history).
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.history.len());
        for (s, y) in self.history.iter().rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push((rho, a));
        }
        let gamma = self
            .history
            .back()
            .map(|(s, y)| dot(s, y) / dot(y, y))
            .unwrap_or(1.0);
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y), (rho, a)) in self.history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `objective` over the box from `x0` (which must lie inside it).
/// Accepted steps satisfy Armijo, so the objective trace never increases and
/// the returned point is the best iterate.
pub fn lbfgsb_minimize<F>(
    mut objective: F,
    x0: &[f64],
    bounds: &Bounds,
    config: &LbfgsbConfig,
) -> Result<LbfgsbResult>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    if x0.len() != bounds.dim() {
        return Err(Error::InvalidArgument(format!(
            "start point has {} coordinates, bounds {}",
            x0.len(),
            bounds.dim()
        )));
    }
    if !bounds.contains(x0) {
        return Err(Error::InvalidArgument(
            "start point lies outside the bounds".into(),
        ));
    }
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective(&x)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteObjective);
    }
    let mut evaluations = 1;
    let mut state = LbfgsbState::new(config.memory, bounds.clone());
    let mut trace = vec![TraceRow {
        iter: 0,
        f,
        gnorm: bounds.projected_gradient_norm(&x, &g),
        alpha: 0.0,
        fallback: false,
    }];

    let termination = loop {
        if trace.last().unwrap().gnorm < config.tol {
            break Termination::Converged;
        }
        if state.iteration >= config.max_iter {
            break Termination::MaxIterations;
        }
        let pinned: Vec<bool> = (0..x.len()).map(|i| bounds.pinned(i, x[i], g[i])).collect();
        let free_grad: Vec<f64> = g
            .iter()
            .zip(&pinned)
            .map(|(&gi, &p)| if p { 0.0 } else { gi })
            .collect();
        let steepest: Vec<f64> = free_grad.iter().map(|v| -v).collect();

        let mut fallback = false;
        let mut d = state.direction(&free_grad);
        d.iter_mut().zip(&pinned).for_each(|(di, &p)| {
            if p {
                *di = 0.0
            }
        });
        if !(dot(&d, &g) < 0.0) {
            d = steepest.clone();
        }
        let mut ls =
            backtracking_line_search(&mut objective, &x, f, &g, &d, bounds, &config.line_search)?;
        evaluations += ls.evaluations;
        if !ls.success && state.history_len() > 0 {
            state.clear_history();
            fallback = true;
            ls = backtracking_line_search(
                &mut objective,
                &x,
                f,
                &g,
                &steepest,
                bounds,
                &config.line_search,
            )?;
            evaluations += ls.evaluations;
        }
        if !ls.success {
            break Termination::LineSearchFailed;
        }
        state.iteration += 1;
        let s: Vec<f64> = ls.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = ls.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        if !state.push_pair(s, y) {
            state.clear_history();
        }
        x = ls.x;
        f = ls.f;
        g = ls.grad;
        trace.push(TraceRow {
            iter: state.iteration,
            f,
            gnorm: bounds.projected_gradient_norm(&x, &g),
            alpha: ls.alpha,
            fallback,
        });
    };

    Ok(LbfgsbResult {
        x,
        f,
        grad: g,
        iterations: state.iteration,
        evaluations,
        termination,
        trace,
    })
}

/// Write a trace as `iter,f,gnorm,alpha` lines.
pub fn write_trace(rows: &[TraceRow], mut out: impl Write) -> std::io::Result<()> {
    for r in rows {
        writeln!(out, "{},{},{},{}", r.iter, r.f, r.gnorm, r.alpha)?;
    }
    Ok(())
}
