//! Gradient cases shared by the gradient tests and the acceptance suite.
//! Each case reports the worst relative error against central differences.

use agecgan_core::autodiff::{Activation, BatchNormMode, Tape, Tensor};
use agecgan_core::models::{
    condition_tensor, embed_forward, generator_forward, init_params, Bound, ModelCheckpoint, Phase,
    LATENT_DIM,
};
use agecgan_core::synth::AgeCategory;

use super::gradcheck::{check, random, random_off_zero, weighted_sum};

pub const PRIMITIVE_TOL: f64 = 1e-3;
pub const COMPOSITE_TOL: f64 = 1e-2;
const EPS64: f64 = 1e-5;
const EPS32: f64 = 1e-3;

pub fn primitive_cases() -> Vec<(String, f64)> {
    let mut cases = Vec::new();
    {
        let inputs = [random::<f32>(&[3, 4], 1), random::<f32>(&[4, 2], 2)];
        let err = check(&inputs, EPS32, |t, v| {
            let y = t.matmul(v[0], v[1]).unwrap();
            t.sum(y).unwrap()
        });
        cases.push(("matmul_f32".into(), err));
    }
    {
        let inputs = [random::<f64>(&[3, 4], 3), random::<f64>(&[4, 5], 4)];
        let err = check(&inputs, EPS64, |t, v| {
            let y = t.matmul(v[0], v[1]).unwrap();
            weighted_sum(t, y, 5)
        });
        cases.push(("matmul_f64_weighted".into(), err));
    }
    {
        let inputs = [
            random::<f32>(&[2, 8, 8], 10),
            random::<f32>(&[3, 2, 3, 3], 11),
        ];
        let err = check(&inputs, EPS32, |t, v| {
            let y = t.conv2d(v[0], v[1], 1, 1).unwrap();
            weighted_sum(t, y, 12)
        });
        cases.push(("conv2d_f32".into(), err));
    }
    {
        let inputs = [
            random::<f64>(&[2, 3, 7, 6], 13),
            random::<f64>(&[4, 3, 4, 4], 14),
        ];
        let err = check(&inputs, EPS64, |t, v| {
            let y = t.conv2d(v[0], v[1], 2, 1).unwrap();
            weighted_sum(t, y, 15)
        });
        cases.push(("conv2d_batched_strided_f64".into(), err));
    }
    {
        let inputs = [
            random::<f64>(&[2, 3, 3, 4], 20),
            random::<f64>(&[3, 2, 4, 4], 21),
        ];
        let err = check(&inputs, EPS64, |t, v| {
            let y = t.conv_transpose2d(v[0], v[1], 2, 1).unwrap();
            weighted_sum(t, y, 22)
        });
        cases.push(("conv_transpose2d_f64".into(), err));
    }
    {
        let inputs = [
            random::<f32>(&[2, 4, 4], 23),
            random::<f32>(&[2, 3, 4, 4], 24),
        ];
        let err = check(&inputs, EPS32, |t, v| {
            let y = t.conv_transpose2d(v[0], v[1], 2, 1).unwrap();
            weighted_sum(t, y, 25)
        });
        cases.push(("conv_transpose2d_f32".into(), err));
    }
    {
        let inputs = [
            random::<f64>(&[4, 2, 2, 2], 40),
            random::<f64>(&[2], 41),
            random::<f64>(&[2], 42),
        ];
        let err = check(&inputs, EPS64, |t, v| {
            let (y, _) = t
                .batch_norm(v[0], v[1], v[2], BatchNormMode::Train)
                .unwrap();
            weighted_sum(t, y, 43)
        });
        cases.push(("batch_norm_train_f64".into(), err));
    }
    {
        let rm = [0.3, -0.2];
        let rv = [0.5, 2.0];
        let inputs = [
            random::<f64>(&[3, 2, 2], 44),
            random::<f64>(&[2], 45),
            random::<f64>(&[2], 46),
        ];
        let err = check(&inputs, EPS64, |t, v| {
            let mode = BatchNormMode::Infer {
                running_mean: &rm,
                running_var: &rv,
            };
            let (y, _) = t.batch_norm(v[0], v[1], v[2], mode).unwrap();
            weighted_sum(t, y, 47)
        });
        cases.push(("batch_norm_infer_f64".into(), err));
    }
    {
        let inputs = [random::<f64>(&[4, 6], 70)];
        let err = check(&inputs, EPS64, |t, v| {
            t.softmax_xent(v[0], &[0, 5, 2, 2]).unwrap()
        });
        cases.push(("softmax_xent_f64".into(), err));
    }
    {
        let inputs = [random::<f32>(&[3, 6], 71)];
        let err = check(&inputs, EPS32, |t, v| {
            t.softmax_xent(v[0], &[1, 4, 0]).unwrap()
        });
        cases.push(("softmax_xent_f32".into(), err));
    }
    {
        let inputs = [random::<f64>(&[2, 3], 90), random::<f64>(&[2, 3], 91)];
        let err = check(&inputs, EPS64, |t, v| t.l2_sq(v[0], v[1]).unwrap());
        cases.push(("l2_sq_f64".into(), err));
    }
    {
        let inputs = [
            random::<f64>(&[2, 3, 2, 2], 100),
            random::<f64>(&[2, 4], 101),
            random::<f64>(&[3], 102),
        ];
        let err = check(&inputs, EPS64, |t, v| {
            let b = t.broadcast_spatial(v[1], 2, 2).unwrap();
            let c = t.concat(v[0], b).unwrap();
            let bias = t.reshape(v[2], &[3]).unwrap();
            let flat = t.reshape(c, &[2, 28]).unwrap();
            let first = t.reshape(v[0], &[2, 12]).unwrap();
            let mm = t.add_channel_bias(v[0], bias).unwrap();
            let s1 = weighted_sum(t, flat, 103);
            let s2 = weighted_sum(t, mm, 104);
            let s3 = weighted_sum(t, first, 105);
            let s = t.add(s1, s2).unwrap();
            t.add(s, s3).unwrap()
        });
        cases.push(("shape_ops_f64".into(), err));
    }
    {
        let inputs = [random::<f64>(&[3, 5], 110), random::<f64>(&[5], 111)];
        let err = check(&inputs, EPS64, |t, v| {
            let x = t.add_row_bias(v[0], v[1]).unwrap();
            let y = t.normalize_rows(x).unwrap();
            weighted_sum(t, y, 112)
        });
        cases.push(("normalize_rows_and_bias_f64".into(), err));
    }
    {
        let inputs = [random::<f64>(&[6], 120), random::<f64>(&[6], 121)];
        let err = check(&inputs, EPS64, |t, v| {
            let a = t.add(v[0], v[1]).unwrap();
            let b = t.sub(v[0], v[1]).unwrap();
            let c = t.mul(a, b).unwrap();
            let d = t.scale(c, 1.7).unwrap();
            let m = t.mean(d).unwrap();
            let s = weighted_sum(t, d, 122);
            t.add(m, s).unwrap()
        });
        cases.push(("elementwise_f64".into(), err));
    }
    for (i, kind) in [
        Activation::Relu,
        Activation::LeakyRelu,
        Activation::Tanh,
        Activation::Sigmoid,
    ]
    .into_iter()
    .enumerate()
    {
        let inputs = [random_off_zero::<f64>(&[5, 4], 50 + i as u64)];
        let err = check(&inputs, EPS64, |t, v| {
            let y = t.activation(v[0], kind).unwrap();
            weighted_sum(t, y, 60)
        });
        cases.push((format!("{kind:?}_f64"), err));
    }
    for kind in [Activation::Tanh, Activation::Sigmoid, Activation::LeakyRelu] {
        let inputs = [random_off_zero::<f32>(&[12], 61)];
        let err = check(&inputs, EPS32, |t, v| {
            let y = t.activation(v[0], kind).unwrap();
            weighted_sum(t, y, 62)
        });
        cases.push((format!("{kind:?}_f32"), err));
    }
    {
        let target = [1.0, 0.0, 1.0, 0.0, 1.0];
        let inputs = [random::<f64>(&[5], 80)];
        let err = check(&inputs, EPS64, |t, v| {
            let p = t.sigmoid(v[0]).unwrap();
            t.bce(p, &target).unwrap()
        });
        cases.push(("bce_f64".into(), err));
        let err = check(&inputs, EPS64, |t, v| {
            t.bce_with_logits(v[0], &target).unwrap()
        });
        cases.push(("bce_with_logits_f64".into(), err));
    }
    cases
}

/// Relative error of `analytic` against `numeric`, scaled by the largest
/// analytic component.
fn composite_err(analytic: &[f32], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .fold(0f64, |m, v| m.max(v.abs() as f64))
        .max(1e-8);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a as f64 - n).abs() / scale)
        .fold(0.0, f64::max)
}

fn latent(seed: u64) -> Vec<f32> {
    let t = random::<f32>(&[LATENT_DIM], seed);
    t.data().to_vec()
}

/// Forward `G(z, y)` and an optional FR embedding distance to `target`,
/// reduced to a scalar, on a tape of either precision.
fn composite_forward<T: agecgan_core::autodiff::Scalar>(
    tape: &mut Tape<T>,
    g: &ModelCheckpoint,
    fr: Option<(&ModelCheckpoint, &Tensor<T>)>,
    z: agecgan_core::autodiff::Var,
    y: AgeCategory,
) -> agecgan_core::autodiff::Var {
    let pg = Bound::new(tape, g, false);
    let yv = tape.constant(condition_tensor(&[y]));
    let img = generator_forward(tape, &pg, z, yv, Phase::Infer)
        .unwrap()
        .out;
    match fr {
        Some((fr, target)) => {
            let pf = Bound::new(tape, fr, false);
            let e = embed_forward(tape, &pf, img).unwrap();
            let t = tape.constant(target.clone());
            tape.l2_sq(e, t).unwrap()
        }
        None => weighted_sum(tape, img, 7),
    }
}

/// f32 tape gradient in `z` checked against f64 central differences.
fn latent_case(g: &ModelCheckpoint, fr: Option<&ModelCheckpoint>, seed: u64) -> f64 {
    let y = AgeCategory::new((seed % 6) as usize).unwrap();
    let target32 = fr.map(|fr| {
        let x = random::<f32>(&[1, 3, 32, 32], seed + 1);
        let mut tape = Tape::<f32>::new();
        let p = Bound::new(&mut tape, fr, false);
        let xv = tape.constant(x);
        let e = embed_forward(&mut tape, &p, xv).unwrap();
        tape.value(e).unwrap().clone()
    });
    let target64 = target32.as_ref().map(|t| t.cast::<f64>());
    let z = latent(seed + 2);

    let mut tape = Tape::<f32>::new();
    let zv = tape.param(Tensor::new(vec![1, LATENT_DIM], z.clone()).unwrap());
    let out = composite_forward(&mut tape, g, fr.zip(target32.as_ref()), zv, y);
    tape.backward(out).unwrap();
    let analytic = tape.grad(zv).unwrap().to_vec();

    let eval = |z: &[f64]| -> f64 {
        let mut tape = Tape::<f64>::new();
        let zv = tape.constant(Tensor::new(vec![1, LATENT_DIM], z.to_vec()).unwrap());
        let out = composite_forward(&mut tape, g, fr.zip(target64.as_ref()), zv, y);
        tape.value(out).unwrap().item()
    };
    let z64: Vec<f64> = z.iter().map(|&v| v as f64).collect();
    let numeric: Vec<f64> = (0..LATENT_DIM)
        .map(|i| {
            let mut p = z64.clone();
            let mut m = z64.clone();
            p[i] += EPS64;
            m[i] -= EPS64;
            (eval(&p) - eval(&m)) / (2.0 * EPS64)
        })
        .collect();
    composite_err(&analytic, &numeric)
}

/// `∂/∂z` of the generator alone and of the identity objective through
/// FR∘G, for the given (possibly trained) networks.
pub fn composite_cases(g: &ModelCheckpoint, fr: &ModelCheckpoint) -> Vec<(String, f64)> {
    vec![
        ("generator_dz".into(), latent_case(g, None, 100)),
        ("fr_of_generator_dz".into(), latent_case(g, Some(fr), 200)),
        (
            "fr_of_generator_dz_other_age".into(),
            latent_case(g, Some(fr), 303),
        ),
    ]
}

pub fn untrained_composite_cases() -> Vec<(String, f64)> {
    composite_cases(
        &init_params("generator", 1).unwrap(),
        &init_params("fr", 3).unwrap(),
    )
}
