use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::registry::{registry, Architecture, ParamKind, INIT_STD};
use crate::autodiff::{BatchStats, Tensor};
use crate::error::{Error, Result};
use crate::synth::mix_seed;

pub const MANIFEST_EXT: &str = "ckpt";
pub const BLOB_EXT: &str = "bin";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedParam {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: Tensor,
}

/// Parameters of one network in registry order, plus free-form metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub arch: Architecture,
    pub params: Vec<NamedParam>,
    pub metadata: BTreeMap<String, String>,
}

/// Normal(0, 0.02) weights, zero biases and shifts, unit scales and
/// running variances.
pub fn init_params(arch: &str, seed: u64) -> Result<ModelCheckpoint> {
    let arch: Architecture = arch.parse()?;
    let normal = Normal::new(0.0f32, INIT_STD as f32).expect("valid std");
    let params = registry(arch)
        .into_iter()
        .enumerate()
        .map(|(i, spec)| {
            let numel = spec.shape.iter().product();
            let data = match spec.kind {
                ParamKind::Weight => {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(mix_seed(seed, &[arch as u64, i as u64]));
                    (0..numel).map(|_| normal.sample(&mut rng)).collect()
                }
                ParamKind::Gamma | ParamKind::RunningVar => vec![1.0; numel],
                ParamKind::Bias | ParamKind::Beta | ParamKind::RunningMean => vec![0.0; numel],
            };
            NamedParam {
                name: spec.name,
                kind: spec.kind,
                tensor: Tensor::new(spec.shape, data).expect("registry shapes are positive"),
            }
        })
        .collect();
    let mut metadata = BTreeMap::new();
    metadata.insert("seed".into(), seed.to_string());
    Ok(ModelCheckpoint {
        arch,
        params,
        metadata,
    })
}

fn shape_text(shape: &[usize]) -> String {
    shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

impl ModelCheckpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params
            .iter_mut()
            .find(|p| p.name == name)
            .map(|p| &mut p.tensor)
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn trainable(&self) -> impl Iterator<Item = &NamedParam> {
        self.params.iter().filter(|p| p.kind.trainable())
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    /// Fold one training batch's statistics into `{prefix}.running_*`.
    pub fn update_running_stats(&mut self, stats: &[(String, BatchStats<f32>)]) -> Result<()> {
        for (prefix, s) in stats {
            let mean_name = format!("{prefix}.running_mean");
            let var_name = format!("{prefix}.running_var");
            let mi = self.index_of(&mean_name)?;
            let vi = self.index_of(&var_name)?;
            let (lo, hi) = self.params.split_at_mut(vi);
            s.update_running(lo[mi].tensor.data_mut(), hi[0].tensor.data_mut());
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.params
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("{} has no parameter `{name}`", self.arch))
            })
    }

    /// Check names, order and shapes against the registry.
    pub fn validate(&self) -> Result<()> {
        let specs = registry(self.arch);
        let matches = specs.len() == self.params.len()
            && specs
                .iter()
                .zip(&self.params)
                .all(|(s, p)| s.name == p.name && s.shape == p.tensor.shape() && s.kind == p.kind);
        if matches {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "parameters do not match the {} registry",
                self.arch
            )))
        }
    }

    pub fn manifest_path(stem: &Path) -> PathBuf {
        stem.with_extension(MANIFEST_EXT)
    }

    pub fn blob_path(stem: &Path) -> PathBuf {
        stem.with_extension(BLOB_EXT)
    }

    /// Manifest text: `#key=value` metadata lines, then one
    /// `name,shape,offset,length` line per parameter (offsets and lengths in
    /// floats).
    pub fn manifest(&self) -> String {
        let mut out = format!("#network={}\n", self.arch);
        for (k, v) in &self.metadata {
            out.push_str(&format!("#{k}={v}\n"));
        }
        let mut offset = 0;
        for p in &self.params {
            let len = p.tensor.numel();
            out.push_str(&format!(
                "{},{},{offset},{len}\n",
                p.name,
                shape_text(p.tensor.shape())
            ));
            offset += len;
        }
        out
    }

    pub fn blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 * self.num_values());
        for p in &self.params {
            for v in p.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Write `<stem>.ckpt` and `<stem>.bin`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        if let Some(parent) = stem.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(Self::blob_path(stem), self.blob())?;
        fs::write(Self::manifest_path(stem), self.manifest())?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let manifest_path = Self::manifest_path(stem);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::Checkpoint {
            path: manifest_path.clone(),
            msg: e.to_string(),
        })?;
        let blob = fs::read(Self::blob_path(stem)).map_err(|e| Error::Checkpoint {
            path: Self::blob_path(stem),
            msg: e.to_string(),
        })?;
        Self::parse(&text, &blob).map_err(|msg| Error::Checkpoint {
            path: manifest_path,
            msg,
        })
    }

    pub fn parse(manifest: &str, blob: &[u8]) -> std::result::Result<Self, String> {
        if !blob.len().is_multiple_of(4) {
            return Err(format!("blob length {} is not a multiple of 4", blob.len()));
        }
        let floats: Vec<f32> = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut metadata = BTreeMap::new();
        let mut arch = None;
        let mut entries = Vec::new();
        for line in manifest.lines().filter(|l| !l.trim().is_empty()) {
            if let Some(meta) = line.strip_prefix('#') {
                let (k, v) = meta
                    .split_once('=')
                    .ok_or_else(|| format!("bad metadata line `{line}`"))?;
                if k == "network" {
                    arch = Some(v.parse::<Architecture>().map_err(|e| e.to_string())?);
                } else {
                    metadata.insert(k.to_string(), v.to_string());
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let [name, shape, offset, len] = fields[..] else {
                return Err(format!("bad parameter line `{line}`"));
            };
            let shape: Vec<usize> = shape
                .split('x')
                .map(|d| d.parse().map_err(|_| format!("bad shape in `{line}`")))
                .collect::<std::result::Result<_, _>>()?;
            let offset: usize = offset
                .parse()
                .map_err(|_| format!("bad offset in `{line}`"))?;
            let len: usize = len.parse().map_err(|_| format!("bad length in `{line}`"))?;
            entries.push((name.to_string(), shape, offset, len));
        }
        let arch = arch.ok_or("missing #network line")?;
        let specs = registry(arch);
        if specs.len() != entries.len() {
            return Err(format!(
                "{} parameters, registry has {}",
                entries.len(),
                specs.len()
            ));
        }
        let mut params = Vec::with_capacity(entries.len());
        let mut expected_offset = 0;
        for (spec, (name, shape, offset, len)) in specs.into_iter().zip(entries) {
            if spec.name != name || spec.shape != shape {
                return Err(format!(
                    "parameter `{name}` {shape:?} does not match registry `{}` {:?}",
                    spec.name, spec.shape
                ));
            }
            if offset != expected_offset
                || len != shape.iter().product::<usize>()
                || offset + len > floats.len()
            {
                return Err(format!("inconsistent extent for `{name}`"));
            }
            expected_offset += len;
            params.push(NamedParam {
                name,
                kind: spec.kind,
                tensor: Tensor::new(shape, floats[offset..offset + len].to_vec())
                    .map_err(|e| e.to_string())?,
            });
        }
        if expected_offset != floats.len() {
            return Err(format!(
                "blob holds {} floats, manifest {expected_offset}",
                floats.len()
            ));
        }
        Ok(Self {
            arch,
            params,
            metadata,
        })
    }
}
