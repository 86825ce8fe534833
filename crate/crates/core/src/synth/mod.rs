//! Procedural avatar faces with known identity and age.

mod dataset;
mod imageio;
mod render;

pub use dataset::{
    generate_dataset, identity_for, mix_seed, nuisance_for, rng_for, test_identities, Corpus,
    Sample, Split, MANIFEST_FILE, MANIFEST_HEADER,
};
pub use imageio::{from_rgb, load_face, load_png, montage, save_montage, save_png, to_rgb};
pub use render::{
    age_mask, byte_to_pixel, pixel_to_byte, render_avatar, AgeCategory, IdentityParams,
    NuisanceParams, AGE_CATEGORIES, CHANNELS, IDENTITY_FACTORS, IMAGE_SIZE, MAX_WRINKLES,
};
