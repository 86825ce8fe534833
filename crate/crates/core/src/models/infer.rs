//! Batched 32-bit inference over checkpoints, chunked to bound tape memory.

use super::checkpoint::ModelCheckpoint;
use super::nets::{
    age_logits, condition_tensor, discriminator_logits, embed_forward, encoder_forward,
    expect_arch, generator_forward, Bound, Phase,
};
use super::registry::{Architecture, LATENT_DIM};
use crate::autodiff::{sigmoid, softmax_rows, Tape, Tensor, Var};
use crate::error::{shape_err, Result};
use crate::synth::{AgeCategory, AGE_CATEGORIES};

pub const INFER_CHUNK: usize = 128;

fn image_batch(images: &Tensor) -> Result<usize> {
    match images.shape() {
        [n, 3, 32, 32] => Ok(*n),
        s => shape_err("images", format!("expected [n, 3, 32, 32], got {s:?}")),
    }
}

fn rows(t: &Tensor, start: usize, end: usize) -> Tensor {
    let width = t.numel() / t.shape()[0];
    let mut shape = t.shape().to_vec();
    shape[0] = end - start;
    Tensor::new(shape, t.data()[start * width..end * width].to_vec()).expect("row slice")
}

fn concat_rows(parts: Vec<Tensor>) -> Tensor {
    let mut shape = parts[0].shape().to_vec();
    shape[0] = parts.iter().map(|p| p.shape()[0]).sum();
    let data = parts.into_iter().flat_map(Tensor::into_data).collect();
    Tensor::new(shape, data).expect("row concat")
}

fn map_images(
    ckpt: &ModelCheckpoint,
    arch: Architecture,
    images: &Tensor,
    f: impl Fn(&mut Tape, &Bound<f32>, Var) -> Result<Var>,
) -> Result<Tensor> {
    expect_arch(ckpt, arch)?;
    let n = image_batch(images)?;
    let mut parts = Vec::new();
    for start in (0..n).step_by(INFER_CHUNK) {
        let end = (start + INFER_CHUNK).min(n);
        let mut tape = Tape::new();
        let p = Bound::new(&mut tape, ckpt, false);
        let x = tape.constant(rows(images, start, end));
        let out = f(&mut tape, &p, x)?;
        parts.push(tape.value(out)?.clone());
    }
    Ok(concat_rows(parts))
}

/// `G(z, y)` for `z[n,64]` (row-major) and one age per row.
pub fn generate(g: &ModelCheckpoint, z: &Tensor, ages: &[AgeCategory]) -> Result<Tensor> {
    expect_arch(g, Architecture::Generator)?;
    if z.shape() != [ages.len(), LATENT_DIM] {
        return shape_err(
            "generate",
            format!("z {:?} for {} conditions", z.shape(), ages.len()),
        );
    }
    let mut parts = Vec::new();
    for start in (0..ages.len()).step_by(INFER_CHUNK) {
        let end = (start + INFER_CHUNK).min(ages.len());
        let mut tape = Tape::new();
        let p = Bound::new(&mut tape, g, false);
        let zv = tape.constant(rows(z, start, end));
        let yv = tape.constant(condition_tensor(&ages[start..end]));
        let out = generator_forward(&mut tape, &p, zv, yv, Phase::Infer)?.out;
        parts.push(tape.value(out)?.clone());
    }
    Ok(concat_rows(parts))
}

/// `D(x, y)` probabilities.
pub fn discriminate(
    d: &ModelCheckpoint,
    images: &Tensor,
    ages: &[AgeCategory],
) -> Result<Vec<f32>> {
    expect_arch(d, Architecture::Discriminator)?;
    if image_batch(images)? != ages.len() {
        return shape_err(
            "discriminate",
            format!("{} images, {} conditions", images.shape()[0], ages.len()),
        );
    }
    let mut out = Vec::with_capacity(ages.len());
    for start in (0..ages.len()).step_by(INFER_CHUNK) {
        let end = (start + INFER_CHUNK).min(ages.len());
        let mut tape = Tape::new();
        let p = Bound::new(&mut tape, d, false);
        let x = tape.constant(rows(images, start, end));
        let y = tape.constant(condition_tensor(&ages[start..end]));
        let logits = discriminator_logits(&mut tape, &p, x, y)?;
        out.extend(tape.data(logits).iter().map(|&l| sigmoid(l)));
    }
    Ok(out)
}

/// `E(x)` latents `[n,64]`.
pub fn encode(e: &ModelCheckpoint, images: &Tensor) -> Result<Tensor> {
    map_images(e, Architecture::Encoder, images, encoder_forward)
}

/// `FR(x)` unit embeddings `[n,32]`.
pub fn embed(fr: &ModelCheckpoint, images: &Tensor) -> Result<Tensor> {
    map_images(fr, Architecture::FaceRecognizer, images, embed_forward)
}

/// `A(x)` category probabilities `[n,6]`.
pub fn estimate_age(a: &ModelCheckpoint, images: &Tensor) -> Result<Tensor> {
    let logits = map_images(a, Architecture::AgeEstimator, images, age_logits)?;
    let probs = softmax_rows(logits.data(), AGE_CATEGORIES);
    Tensor::new(logits.shape().to_vec(), probs)
}

/// Index of the largest probability in each row.
pub fn top1(probs: &Tensor) -> Vec<usize> {
    let k = probs.shape()[1];
    probs
        .data()
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f32::NEG_INFINITY), |best, (i, &v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}

/// Stack `[3,32,32]` images into `[n,3,32,32]`.
pub fn stack_images<'a>(images: impl IntoIterator<Item = &'a Tensor>) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut n = 0;
    for img in images {
        if img.shape() != [3, 32, 32] {
            return shape_err("stack_images", format!("image of shape {:?}", img.shape()));
        }
        data.extend_from_slice(img.data());
        n += 1;
    }
    Tensor::new(vec![n, 3, 32, 32], data)
}

/// Row `i` of a batch as its own tensor (leading axis dropped).
pub fn row(t: &Tensor, i: usize) -> Tensor {
    let r = rows(t, i, i + 1);
    let shape = t.shape()[1..].to_vec();
    r.reshape(shape).expect("row reshape")
}
