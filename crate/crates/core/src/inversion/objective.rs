use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::models::{
    condition_tensor, embed, embed_forward, encode, estimate_age, generate, generator_forward,
    top1, Bound, ModelCheckpoint, Phase, LATENT_DIM,
};
use crate::optim::{lbfgsb_minimize, Bounds, Evaluation, LbfgsbConfig, Termination, TraceRow};
use crate::synth::AgeCategory;

/// Latent box half-width.
pub const LATENT_BOUND: f64 = 3.0;

fn single_image(x: &Tensor) -> Result<Tensor> {
    if x.shape() != [3, 32, 32] {
        return Err(Error::Shape {
            op: "reconstruct",
            detail: format!("expected a [3, 32, 32] face, got {:?}", x.shape()),
        });
    }
    x.clone().reshape(vec![1, 3, 32, 32])
}

fn render(g: &ModelCheckpoint, z: &[f32], age: AgeCategory) -> Result<Tensor> {
    let z = Tensor::new(vec![1, LATENT_DIM], z.to_vec())?;
    generate(g, &z, &[age])?.reshape(vec![3, 32, 32])
}

/// `G(z*, y_target)`.
pub fn age_swap(g: &ModelCheckpoint, z: &[f32], target: AgeCategory) -> Result<Tensor> {
    render(g, z, target)
}

/// Ground-truth age when known, else the age oracle's top-1.
pub fn resolve_age(
    known: Option<AgeCategory>,
    a: Option<&ModelCheckpoint>,
    x: &Tensor,
) -> Result<AgeCategory> {
    match (known, a) {
        (Some(age), _) => Ok(age),
        (None, Some(a)) => AgeCategory::new(top1(&estimate_age(a, &single_image(x)?)?)[0]),
        (None, None) => Err(Error::InvalidArgument(
            "input age unknown and no age estimator given".into(),
        )),
    }
}

#[derive(Clone, Debug)]
pub struct InitialApproximation {
    pub z0: Vec<f32>,
    pub image: Tensor,
    /// Coordinates the box clamp changed.
    pub clamped: usize,
}

/// `z0 = clamp(E(x), [−3, 3])` and its reconstruction `G(z0, y0)`.
pub fn initial_approximation(
    e: &ModelCheckpoint,
    g: &ModelCheckpoint,
    x: &Tensor,
    y0: AgeCategory,
) -> Result<InitialApproximation> {
    let raw = encode(e, &single_image(x)?)?.into_data();
    let bound = LATENT_BOUND as f32;
    let clamped = raw.iter().filter(|v| v.abs() > bound).count();
    let z0: Vec<f32> = raw.iter().map(|v| v.clamp(-bound, bound)).collect();
    let image = render(g, &z0, y0)?;
    Ok(InitialApproximation { z0, image, clamped })
}

#[derive(Clone, Debug)]
pub struct LatentFit {
    pub z: Vec<f32>,
    pub image: Tensor,
    pub f_init: f64,
    pub f_final: f64,
    pub iterations: usize,
    pub final_gnorm: f64,
    pub termination: Option<Termination>,
    pub trace: Vec<TraceRow>,
    /// The optimizer failed outright and `z` is the initialization.
    pub fallback_to_init: bool,
}

/// Objective in the latent, evaluated on a fresh tape each call.
fn latent_objective<'a>(
    g: &'a ModelCheckpoint,
    y0: AgeCategory,
    loss: impl Fn(&mut Tape, Var) -> Result<Var> + 'a,
) -> impl FnMut(&[f64]) -> Result<Evaluation> + 'a {
    move |z: &[f64]| {
        let mut tape = Tape::new();
        let p = Bound::new(&mut tape, g, false);
        let zt = Tensor::new(vec![1, LATENT_DIM], z.iter().map(|&v| v as f32).collect())?;
        let zv = tape.param(zt);
        let yv = tape.constant(condition_tensor(&[y0]));
        let image = generator_forward(&mut tape, &p, zv, yv, Phase::Infer)?.out;
        let f = loss(&mut tape, image)?;
        tape.backward(f)?;
        let value = tape.value(f)?.item() as f64;
        let grad = tape
            .grad(zv)
            .expect("latent gradient")
            .iter()
            .map(|&v| v as f64)
            .collect();
        Ok((value, grad))
    }
}

fn fit(
    g: &ModelCheckpoint,
    y0: AgeCategory,
    z0: &[f32],
    config: &LbfgsbConfig,
    objective: impl FnMut(&[f64]) -> Result<Evaluation>,
) -> Result<LatentFit> {
    if z0.len() != LATENT_DIM || z0.iter().any(|v| (v.abs() as f64) > LATENT_BOUND) {
        return Err(Error::InvalidArgument(
            "z0 must be a 64-vector inside the latent box".into(),
        ));
    }
    let x0: Vec<f64> = z0.iter().map(|&v| v as f64).collect();
    let bounds = Bounds::uniform(LATENT_DIM, -LATENT_BOUND, LATENT_BOUND);
    match lbfgsb_minimize(objective, &x0, &bounds, config) {
        Ok(r) => {
            let z: Vec<f32> = r.x.iter().map(|&v| v as f32).collect();
            Ok(LatentFit {
                image: render(g, &z, y0)?,
                z,
                f_init: r.f_init(),
                f_final: r.f,
                iterations: r.iterations,
                final_gnorm: r.final_gnorm(),
                termination: Some(r.termination),
                trace: r.trace,
                fallback_to_init: false,
            })
        }
        Err(e) => {
            log::warn!("latent optimization failed, keeping initialization: {e}");
            Ok(LatentFit {
                z: z0.to_vec(),
                image: render(g, z0, y0)?,
                f_init: f64::NAN,
                f_final: f64::NAN,
                iterations: 0,
                final_gnorm: f64::NAN,
                termination: None,
                trace: Vec::new(),
                fallback_to_init: true,
            })
        }
    }
}

/// Minimize `‖x − G(z, y0)‖²` over the latent box from `z0`.
pub fn optimize_pixelwise(
    g: &ModelCheckpoint,
    x: &Tensor,
    z0: &[f32],
    y0: AgeCategory,
    config: &LbfgsbConfig,
) -> Result<LatentFit> {
    let target = single_image(x)?;
    let objective = latent_objective(g, y0, move |tape, image| {
        let t = tape.constant(target.clone());
        tape.l2_sq(image, t)
    });
    fit(g, y0, z0, config, objective)
}

/// Minimize `‖FR(x) − FR(G(z, y0))‖²` over the latent box from `z0`.
pub fn optimize_identity_preserving(
    g: &ModelCheckpoint,
    fr: &ModelCheckpoint,
    x: &Tensor,
    z0: &[f32],
    y0: AgeCategory,
    config: &LbfgsbConfig,
) -> Result<LatentFit> {
    let target = embed(fr, &single_image(x)?)?;
    let objective = latent_objective(g, y0, move |tape, image| {
        let p = Bound::new(tape, fr, false);
        let e = embed_forward(tape, &p, image)?;
        let t = tape.constant(target.clone());
        tape.l2_sq(e, t)
    });
    fit(g, y0, z0, config, objective)
}
