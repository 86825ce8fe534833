//! Optimizer test problems with independent solutions: Rosenbrock, random
//! strictly convex box quadratics with a brute-force active-set oracle and a
//! dense-matrix quasi-Newton reference solver.

use agecgan_core::optim::Evaluation;
use agecgan_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rosenbrock(x: &[f64]) -> Result<Evaluation> {
    let (a, b) = (x[0], x[1]);
    let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
    let g = vec![
        -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
        200.0 * (b - a * a),
    ];
    Ok((f, g))
}

/// Box quadratic `½xᵀQx − bᵀx`.
#[derive(Clone, Debug)]
pub struct BoxQuadratic {
    pub q: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl BoxQuadratic {
    pub fn random(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m: Vec<Vec<f64>> = (0..dim)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let q = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| {
                        let mtm: f64 = (0..dim).map(|k| m[k][i] * m[k][j]).sum();
                        mtm + if i == j { 0.5 } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        let b = (0..dim).map(|_| rng.random_range(-6.0..6.0)).collect();
        Self {
            q,
            b,
            lo: -1.0,
            hi: 1.0,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let mut f = 0.0;
        for i in 0..d {
            for j in 0..d {
                f += 0.5 * x[i] * self.q[i][j] * x[j];
            }
            f -= self.b[i] * x[i];
        }
        f
    }

    pub fn eval(&self, x: &[f64]) -> Result<Evaluation> {
        let g = (0..x.len())
            .map(|i| (0..x.len()).map(|j| self.q[i][j] * x[j]).sum::<f64>() - self.b[i])
            .collect();
        Ok((self.value(x), g))
    }

    /// Enumerate every assignment of {lower, upper, free} to the coordinates,
    /// solve the free block exactly and keep the best feasible candidate.
    pub fn brute_force(&self) -> Vec<f64> {
        let d = self.b.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for code in 0..3usize.pow(d as u32) {
            let mut state = Vec::with_capacity(d);
            let mut c = code;
            for _ in 0..d {
                state.push(c % 3);
                c /= 3;
            }
            let mut x = vec![0.0; d];
            let free: Vec<usize> = (0..d).filter(|&i| state[i] == 2).collect();
            for i in 0..d {
                match state[i] {
                    0 => x[i] = self.lo,
                    1 => x[i] = self.hi,
                    _ => {}
                }
            }
            if !free.is_empty() {
                let mut a: Vec<Vec<f64>> = free
                    .iter()
                    .map(|&i| free.iter().map(|&j| self.q[i][j]).collect())
                    .collect();
                let mut rhs: Vec<f64> = free
                    .iter()
                    .map(|&i| {
                        self.b[i]
                            - (0..d)
                                .filter(|j| state[*j] != 2)
                                .map(|j| self.q[i][j] * x[j])
                                .sum::<f64>()
                    })
                    .collect();
                let sol = gauss_solve(&mut a, &mut rhs);
                for (k, &i) in free.iter().enumerate() {
                    x[i] = sol[k];
                }
            }
            if x.iter()
                .any(|&v| v < self.lo - 1e-12 || v > self.hi + 1e-12)
            {
                continue;
            }
            let f = self.value(&x);
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, x));
            }
        }
        best.unwrap().1
    }
}

fn gauss_solve(a: &mut [Vec<f64>], b: &mut [f64]) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let m = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= m * a[col][k];
            }
            b[row] -= m * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Separate projected L-BFGS written from scratch: dense inverse-Hessian
/// approximation rebuilt from the last `m` pairs by explicit BFGS updates.
pub fn reference_solve(
    mut f: impl FnMut(&[f64]) -> Result<Evaluation>,
    x0: &[f64],
    lo: f64,
    hi: f64,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let clip = |v: f64| v.clamp(lo, hi);
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x).unwrap();
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for _ in 0..100 {
        let pg = (0..n)
            .map(|i| (clip(x[i] - g[i]) - x[i]).abs())
            .fold(0.0, f64::max);
        if pg < 1e-5 {
            break;
        }
        let active: Vec<bool> = (0..n)
            .map(|i| (x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0))
            .collect();
        let gf: Vec<f64> = (0..n).map(|i| if active[i] { 0.0 } else { g[i] }).collect();
        let mut h = vec![vec![0.0; n]; n];
        let gamma = pairs.last().map_or(1.0, |(s, y)| {
            s.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / y.iter().map(|v| v * v).sum::<f64>()
        });
        for i in 0..n {
            h[i][i] = gamma;
        }
        for (s, y) in &pairs {
            let rho = 1.0 / s.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
            // H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ
            let mut left = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    left[i][j] = (if i == j { 1.0 } else { 0.0 }) - rho * s[i] * y[j];
                }
            }
            let mut tmp = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    tmp[i][j] = (0..n).map(|k| left[i][k] * h[k][j]).sum();
                }
            }
            for i in 0..n {
                for j in 0..n {
                    h[i][j] =
                        (0..n).map(|k| tmp[i][k] * left[j][k]).sum::<f64>() + rho * s[i] * s[j];
                }
            }
        }
        let mut d: Vec<f64> = (0..n)
            .map(|i| {
                if active[i] {
                    0.0
                } else {
                    -(0..n).map(|j| h[i][j] * gf[j]).sum::<f64>()
                }
            })
            .collect();
        if d.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() >= 0.0 {
            d = gf.iter().map(|v| -v).collect();
        }
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=30 {
            let xt: Vec<f64> = (0..n).map(|i| clip(x[i] + alpha * d[i])).collect();
            let (ft, gt) = f(&xt).unwrap();
            if ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((xt, ft, gt));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            break;
        };
        let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        if s.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() > 1e-10 {
            pairs.push((s, y));
            if pairs.len() > 10 {
                pairs.remove(0);
            }
        } else {
            pairs.clear();
        }
        x = xn;
        fx = fnew;
        g = gn;
    }
    (x, fx)
}
