//! Generator, discriminator, encoder and the two oracle networks.

mod checkpoint;
mod infer;
mod nets;
mod registry;

pub use checkpoint::{init_params, ModelCheckpoint, NamedParam, BLOB_EXT, MANIFEST_EXT};
pub use infer::{
    discriminate, embed, encode, estimate_age, generate, row, stack_images, top1, INFER_CHUNK,
};
pub use nets::{
    age_logits, condition_tensor, discriminator_logits, embed_forward, encoder_forward,
    generator_forward, Bound, Pass, Phase,
};
pub use registry::{
    registry, Architecture, ParamKind, ParamSpec, EMBED_DIM, FLAT, INIT_STD, LATENT_DIM,
};
