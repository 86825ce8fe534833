//! Central finite-difference oracle. Independent of the tape: it only ever
//! evaluates the forward function.

use agecgan_core::autodiff::{Scalar, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random<T: Scalar>(shape: &[usize], seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64(rng.random_range(-1.0..1.0)))
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Random values bounded away from zero, for checks through kinks.
pub fn random_off_zero<T: Scalar>(shape: &[usize], seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f64 = rng.random_range(0.1..1.0);
            T::from_f64(if rng.random_bool(0.5) { m } else { -m })
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Reduce a tensor to a scalar with fixed random weights so that no
/// gradient component cancels by symmetry.
pub fn weighted_sum<T: Scalar>(tape: &mut Tape<T>, v: Var, seed: u64) -> Var {
    let shape = tape.shape(v).to_vec();
    let w = tape.constant(random(&shape, seed ^ 0x5eed));
    let p = tape.mul(v, w).unwrap();
    tape.sum(p).unwrap()
}

/// ‖a − b‖ / max(‖a‖, ‖b‖), with a floor so exact zeros compare equal.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Compare tape gradients of `f` against central differences for every
/// input. Returns the worst relative error over inputs.
pub fn check<T, F>(inputs: &[Tensor<T>], eps: f64, f: F) -> f64
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Var,
{
    let eval = |values: &[Tensor<T>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).unwrap().item().as_f64()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars);
    tape.backward(out).unwrap();

    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let analytic: Vec<f64> = tape
            .grad(vars[i])
            .unwrap()
            .iter()
            .map(|v| v.as_f64())
            .collect();
        let mut numeric = Vec::with_capacity(input.numel());
        for j in 0..input.numel() {
            let mut values = inputs.to_vec();
            let orig = values[i].data()[j];
            values[i].data_mut()[j] = orig + T::from_f64(eps);
            let plus = eval(&values);
            values[i].data_mut()[j] = orig - T::from_f64(eps);
            let minus = eval(&values);
            // The realized step may differ from eps after rounding.
            let h = (orig + T::from_f64(eps)).as_f64() - (orig - T::from_f64(eps)).as_f64();
            numeric.push((plus - minus) / h);
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}
