use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// One parameter buffer and its gradient, presented to [`AdamState::step`].
pub struct ParamGrad<'a> {
    pub name: &'a str,
    pub value: &'a mut [f32],
    pub grad: &'a [f32],
}

/// Bias-corrected ADAM moments for an ordered set of parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    t: u64,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, sizes: impl IntoIterator<Item = usize>) -> Self {
        let (first, second) = sizes
            .into_iter()
            .map(|n| (vec![0.0; n], vec![0.0; n]))
            .unzip();
        Self {
            config,
            t: 0,
            first,
            second,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Apply one update. The whole step is rejected, leaving parameters and
    /// moments untouched, if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [ParamGrad<'_>]) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::InvalidArgument(format!(
                "adam state tracks {} parameters, got {}",
                self.first.len(),
                params.len()
            )));
        }
        for (p, m) in params.iter().zip(&self.first) {
            if p.value.len() != m.len() || p.grad.len() != m.len() {
                return Err(Error::Shape {
                    op: "adam_step",
                    detail: format!(
                        "`{}`: moments {}, value {}, grad {}",
                        p.name,
                        m.len(),
                        p.value.len(),
                        p.grad.len()
                    ),
                });
            }
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient(p.name.to_string()));
            }
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let (b1, b2) = (c.beta1 as f32, c.beta2 as f32);
        let step_size = (c.lr / bc1) as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        let eps = c.eps as f32;
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            for (((w, &g), m), v) in p
                .value
                .iter_mut()
                .zip(p.grad)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= step_size * *m / (v.sqrt() / bc2_sqrt + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(config: AdamConfig, w0: f32, steps: usize, grad: impl Fn(f32) -> f32) -> f32 {
        let mut state = AdamState::new(config, [1]);
        let mut w = [w0];
        for _ in 0..steps {
            let g = [grad(w[0])];
            state
                .step(&mut [ParamGrad {
                    name: "w",
                    value: &mut w,
                    grad: &g,
                }])
                .unwrap();
        }
        w[0]
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut state = AdamState::new(AdamConfig::default(), [3]);
        let mut w = [1.0f32, -2.0, 0.5];
        for _ in 0..5 {
            state
                .step(&mut [ParamGrad {
                    name: "w",
                    value: &mut w,
                    grad: &[0.0; 3],
                }])
                .unwrap();
        }
        assert_eq!(w, [1.0, -2.0, 0.5]);
        assert_eq!(state.steps(), 5);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        for g in [1e-3f32, 0.7, -5.0, 300.0] {
            let w = run(AdamConfig::with_lr(0.01), 0.0, 1, |_| g);
            assert!((w.abs() - 0.01).abs() < 1e-6, "g={g}: step {w}");
            assert_eq!(w.signum(), -g.signum());
        }
    }

    /// Plain f64 transcription of the ADAM recurrence.
    fn reference_adam(lr: f64, b1: f64, b2: f64, eps: f64, mut w: f64, steps: usize) -> f64 {
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            w -= lr * mh / (vh.sqrt() + eps);
        }
        w
    }

    #[test]
    fn quadratic_converges_like_the_reference_recurrence() {
        let cfg = AdamConfig::with_lr(0.1);
        let expected = reference_adam(0.1, cfg.beta1, cfg.beta2, cfg.eps, 1.0, 200);
        assert!(expected.abs() < 1e-2, "reference |w| = {expected}");
        let w = run(cfg, 1.0, 200, |w| 2.0 * w);
        assert!(w.abs() < 1e-2, "|w| = {w}");
        assert!((w as f64 - expected).abs() < 1e-4);
    }

    #[test]
    fn nan_gradient_rejects_step_and_names_parameter() {
        let mut state = AdamState::new(AdamConfig::default(), [2, 1]);
        let mut a = [1.0f32, 2.0];
        let mut b = [3.0f32];
        let err = state
            .step(&mut [
                ParamGrad {
                    name: "fc.weight",
                    value: &mut a,
                    grad: &[0.1, 0.2],
                },
                ParamGrad {
                    name: "fc.bias",
                    value: &mut b,
                    grad: &[f32::NAN],
                },
            ])
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "fc.bias"));
        assert_eq!(a, [1.0, 2.0]);
        assert_eq!(state.steps(), 0);
    }
}
