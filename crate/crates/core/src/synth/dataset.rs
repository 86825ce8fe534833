use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::imageio::{load_png, save_png};
use super::render::{
    render_avatar, AgeCategory, IdentityParams, NuisanceParams, AGE_CATEGORIES, IDENTITY_FACTORS,
};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const MANIFEST_HEADER: &str = "path,identity_id,age_index,split";
pub const TEST_FRACTION: f64 = 0.1;

const IDENTITY_STREAM: u64 = 0x1d;
const NUISANCE_STREAM: u64 = 0x2e;
const SPLIT_STREAM: u64 = 0x3f;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Fold `parts` into `seed` with splitmix64: `h ← splitmix64(h ⊕ splitmix64(p))`.
pub fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |h, &p| splitmix64(h ^ splitmix64(p)))
}

pub fn rng_for(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, parts))
}

pub fn identity_for(seed: u64, identity: usize) -> IdentityParams {
    let mut rng = rng_for(seed, &[IDENTITY_STREAM, identity as u64]);
    let mut f = [0.0; IDENTITY_FACTORS];
    f.iter_mut().for_each(|v| *v = rng.random::<f64>());
    IdentityParams::from_factors(f)
}

pub fn nuisance_for(seed: u64, identity: usize, age: AgeCategory, sample: usize) -> NuisanceParams {
    let mut rng = rng_for(
        seed,
        &[
            NUISANCE_STREAM,
            identity as u64,
            age.index() as u64,
            sample as u64,
        ],
    );
    NuisanceParams {
        background: rng.random::<f64>(),
        shift_x: rng.random_range(-2..=2),
        shift_y: rng.random_range(-2..=2),
        brightness: rng.random_range(-0.1..=0.1),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    /// Relative to the corpus root.
    pub path: String,
    pub identity: usize,
    pub age: AgeCategory,
    pub split: Split,
    pub image: Tensor,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub samples: Vec<Sample>,
}

/// Identities assigned to the test split: a seeded shuffle, first 10%.
pub fn test_identities(n_identities: usize, seed: u64) -> Vec<usize> {
    let n_test =
        ((n_identities as f64 * TEST_FRACTION).round() as usize).clamp(1, n_identities - 1);
    let mut ids: Vec<usize> = (0..n_identities).collect();
    ids.shuffle(&mut rng_for(seed, &[SPLIT_STREAM]));
    let mut test = ids[..n_test].to_vec();
    test.sort_unstable();
    test
}

/// Render `n_identities × 6 × samples_per_cell` faces with a disjoint
/// identity split.
pub fn generate_dataset(n_identities: usize, samples_per_cell: usize, seed: u64) -> Result<Corpus> {
    if n_identities < 2 {
        return Err(Error::InvalidArgument(
            "need at least two identities".into(),
        ));
    }
    if samples_per_cell == 0 {
        return Err(Error::InvalidArgument(
            "samples_per_cell must be positive".into(),
        ));
    }
    let test = test_identities(n_identities, seed);
    let mut samples = Vec::with_capacity(n_identities * AGE_CATEGORIES * samples_per_cell);
    for identity in 0..n_identities {
        let params = identity_for(seed, identity);
        let split = if test.binary_search(&identity).is_ok() {
            Split::Test
        } else {
            Split::Train
        };
        for age in AgeCategory::all() {
            for sample in 0..samples_per_cell {
                let nuis = nuisance_for(seed, identity, age, sample);
                samples.push(Sample {
                    path: format!("images/id{identity:04}_a{}_s{sample}.png", age.index()),
                    identity,
                    age,
                    split,
                    image: render_avatar(&params, age, &nuis)?,
                });
            }
        }
    }
    Ok(Corpus { samples })
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    /// Sorted distinct identity ids in one split.
    pub fn identities(&self, split: Split) -> Vec<usize> {
        let mut ids: Vec<usize> = self.split(split).map(|s| s.identity).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn manifest(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.path,
                s.identity,
                s.age.index(),
                s.split
            ));
        }
        out
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        for s in &self.samples {
            let path = root.join(&s.path);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            save_png(&s.image, &path)?;
        }
        fs::write(root.join(MANIFEST_FILE), self.manifest())?;
        Ok(())
    }

    pub fn load(root: &Path) -> Result<Self> {
        let manifest_path: PathBuf = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(|_| Error::MissingArtifact {
            path: manifest_path.clone(),
            step: "synth-data".into(),
        })?;
        let bad = |line: &str| Error::Config(format!("malformed manifest line `{line}`"));
        let mut samples = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            let [path, identity, age, split] = fields[..] else {
                return Err(bad(line));
            };
            samples.push(Sample {
                path: path.to_string(),
                identity: identity.parse().map_err(|_| bad(line))?,
                age: AgeCategory::new(age.parse().map_err(|_| bad(line))?)?,
                split: split.parse()?,
                image: load_png(&root.join(path))?,
            });
        }
        Ok(Self { samples })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_mixing_separates_streams() {
        assert_ne!(mix_seed(7, &[1, 2]), mix_seed(7, &[2, 1]));
        assert_ne!(mix_seed(7, &[1]), mix_seed(8, &[1]));
        assert_eq!(mix_seed(7, &[3, 4]), mix_seed(7, &[3, 4]));
    }

    #[test]
    fn small_corpus_counts_and_split() {
        let corpus = generate_dataset(10, 2, 3).unwrap();
        assert_eq!(corpus.len(), 10 * 6 * 2);
        let test = corpus.identities(Split::Test);
        let train = corpus.identities(Split::Train);
        assert_eq!(test.len(), 1);
        assert_eq!(train.len(), 9);
        assert!(test.iter().all(|t| !train.contains(t)));
    }

    #[test]
    fn rejects_degenerate_requests() {
        assert!(generate_dataset(1, 5, 0).is_err());
        assert!(generate_dataset(4, 0, 0).is_err());
    }

    #[test]
    fn nuisance_draws_stay_in_range() {
        for id in 0..50 {
            for age in AgeCategory::all() {
                nuisance_for(11, id, age, 0).validate().unwrap();
            }
            identity_for(11, id).validate().unwrap();
        }
    }
}
