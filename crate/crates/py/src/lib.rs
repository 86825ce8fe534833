//! Python bindings: corpus generation, checkpoints, generation and
//! inversion, the bounded optimizer and the pipeline stages.

use std::collections::BTreeMap;
use std::path::PathBuf;

use agecgan_core::autodiff::Tensor;
use agecgan_core::inversion::{self, ReconstructionMode};
use agecgan_core::models::{self, ModelCheckpoint, LATENT_DIM};
use agecgan_core::optim::{lbfgsb_minimize, Bounds, LbfgsbConfig};
use agecgan_core::pipeline::{self as core_pipeline, PipelineConfig, Workspace};
use agecgan_core::synth::{self, AgeCategory};
use agecgan_core::training::{Network, Settings};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: agecgan_core::Error) -> PyErr {
    match e {
        agecgan_core::Error::InvalidArgument(_) | agecgan_core::Error::Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn age(i: usize) -> PyResult<AgeCategory> {
    AgeCategory::new(i).map_err(err)
}

fn image(data: Vec<f32>) -> PyResult<Tensor> {
    Tensor::new(vec![3, 32, 32], data).map_err(err)
}

/// The synthetic face corpus.
#[pyclass(module = "agecgan")]
struct Corpus {
    inner: synth::Corpus,
}

#[pymethods]
impl Corpus {
    #[staticmethod]
    #[pyo3(signature = (n_identities, samples_per_cell, seed))]
    fn generate(n_identities: usize, samples_per_cell: usize, seed: u64) -> PyResult<Self> {
        synth::generate_dataset(n_identities, samples_per_cell, seed)
            .map(|inner| Self { inner })
            .map_err(err)
    }

    #[staticmethod]
    fn load(root: PathBuf) -> PyResult<Self> {
        synth::Corpus::load(&root)
            .map(|inner| Self { inner })
            .map_err(err)
    }

    fn write(&self, root: PathBuf) -> PyResult<()> {
        self.inner.write(&root).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(path, identity, age, split)` of sample `i`.
    fn sample(&self, i: usize) -> PyResult<(String, usize, usize, String)> {
        let s = self
            .inner
            .samples
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("sample {i} out of range")))?;
        Ok((
            s.path.clone(),
            s.identity,
            s.age.index(),
            s.split.to_string(),
        ))
    }

    /// Pixels of sample `i` in CHW order, in [-1, 1].
    fn image(&self, i: usize) -> PyResult<Vec<f32>> {
        self.inner
            .samples
            .get(i)
            .map(|s| s.image.data().to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("sample {i} out of range")))
    }

    fn manifest(&self) -> String {
        self.inner.manifest()
    }
}

/// Parameters of one network.
#[pyclass(module = "agecgan", skip_from_py_object)]
#[derive(Clone)]
struct Checkpoint {
    inner: ModelCheckpoint,
}

#[pymethods]
impl Checkpoint {
    /// Freshly initialized parameters for `arch`
    /// (generator, discriminator, encoder, fr, age).
    #[staticmethod]
    fn init(arch: &str, seed: u64) -> PyResult<Self> {
        models::init_params(arch, seed)
            .map(|inner| Self { inner })
            .map_err(err)
    }

    #[staticmethod]
    fn load(stem: PathBuf) -> PyResult<Self> {
        ModelCheckpoint::load(&stem)
            .map(|inner| Self { inner })
            .map_err(err)
    }

    fn save(&self, stem: PathBuf) -> PyResult<()> {
        self.inner.save(&stem).map_err(err)
    }

    #[getter]
    fn arch(&self) -> &'static str {
        self.inner.arch.name()
    }

    #[getter]
    fn num_values(&self) -> usize {
        self.inner.num_values()
    }

    fn meta(&self, key: &str) -> Option<String> {
        self.inner.meta(key).map(str::to_string)
    }

    fn __repr__(&self) -> String {
        format!("Checkpoint({}, {} values)", self.arch(), self.num_values())
    }
}

/// `G(z, age)` as a flat CHW image.
#[pyfunction]
fn generate(g: &Checkpoint, z: Vec<f32>, age_index: usize) -> PyResult<Vec<f32>> {
    let z = Tensor::new(vec![1, LATENT_DIM], z).map_err(err)?;
    models::generate(&g.inner, &z, &[age(age_index)?])
        .map(Tensor::into_data)
        .map_err(err)
}

/// Unit identity embedding of an image.
#[pyfunction]
fn embed(fr: &Checkpoint, pixels: Vec<f32>) -> PyResult<Vec<f32>> {
    let x = image(pixels)?.reshape(vec![1, 3, 32, 32]).map_err(err)?;
    models::embed(&fr.inner, &x)
        .map(Tensor::into_data)
        .map_err(err)
}

/// `(latent, f_init, f_final, iterations)` of one reconstruction mode.
type Fit = (Vec<f32>, f64, f64, usize);

/// Reconstruct `pixels` at known age `age_index` and return
/// `{mode: (latent, f_init, f_final, iterations)}`.
#[pyfunction]
#[pyo3(signature = (g, e, fr, pixels, age_index, modes = vec!["pixel".to_string(), "ip".to_string()], max_iter = 100))]
fn reconstruct(
    g: &Checkpoint,
    e: &Checkpoint,
    fr: &Checkpoint,
    pixels: Vec<f32>,
    age_index: usize,
    modes: Vec<String>,
    max_iter: usize,
) -> PyResult<BTreeMap<String, Fit>> {
    let x = image(pixels)?;
    let modes: Vec<ReconstructionMode> = modes
        .iter()
        .map(|m| m.parse())
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let config = LbfgsbConfig {
        max_iter,
        ..LbfgsbConfig::default()
    };
    let r = inversion::reconstruct(
        "py",
        &x,
        age(age_index)?,
        &g.inner,
        &e.inner,
        &fr.inner,
        &modes,
        &config,
    )
    .map_err(err)?;
    let rows = r.rows(&fr.inner, &x).map_err(err)?;
    Ok(rows
        .into_iter()
        .map(|row| {
            let z = r.latent(row.mode).expect("row mode ran").to_vec();
            (
                row.mode.to_string(),
                (z, row.f_init, row.f_final, row.iters),
            )
        })
        .collect())
}

/// Re-render a latent at another age.
#[pyfunction]
fn age_swap(g: &Checkpoint, z: Vec<f32>, target: usize) -> PyResult<Vec<f32>> {
    inversion::age_swap(&g.inner, &z, age(target)?)
        .map(Tensor::into_data)
        .map_err(err)
}

/// Minimize `f` over the box `[lo, hi]`; `f(x)` returns `(value, gradient)`.
/// Returns `(x, f, iterations, termination)`.
#[pyfunction]
#[pyo3(signature = (f, x0, lo, hi, max_iter = 100, tol = 1e-5))]
fn minimize(
    f: Bound<'_, PyAny>,
    x0: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    max_iter: usize,
    tol: f64,
) -> PyResult<(Vec<f64>, f64, usize, String)> {
    let bounds = Bounds::new(lo, hi).map_err(err)?;
    let config = LbfgsbConfig {
        max_iter,
        tol,
        ..LbfgsbConfig::default()
    };
    let mut py_error = None;
    let objective = |x: &[f64]| -> agecgan_core::Result<(f64, Vec<f64>)> {
        match f
            .call1((x.to_vec(),))
            .and_then(|r| r.extract::<(f64, Vec<f64>)>())
        {
            Ok(v) => Ok(v),
            Err(e) => {
                let msg = e.to_string();
                py_error = Some(e);
                Err(agecgan_core::Error::InvalidArgument(msg))
            }
        }
    };
    match lbfgsb_minimize(objective, &x0, &bounds, &config) {
        Ok(r) => Ok((r.x, r.f, r.iterations, format!("{:?}", r.termination))),
        Err(e) => Err(py_error.unwrap_or_else(|| err(e))),
    }
}

/// Pipeline stages over an output root, configured by `key = value` text.
#[pyclass(module = "agecgan")]
struct Pipeline {
    ws: Workspace,
    cfg: PipelineConfig,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (out, config = ""))]
    fn new(out: PathBuf, config: &str) -> PyResult<Self> {
        let settings = Settings::parse(config).map_err(err)?;
        Ok(Self {
            ws: Workspace::new(out),
            cfg: PipelineConfig::from_settings(&settings).map_err(err)?,
        })
    }

    fn synth_data(&self) -> PyResult<usize> {
        core_pipeline::synth_data(&self.ws, &self.cfg)
            .map(|c| c.len())
            .map_err(err)
    }

    /// Train `net` (cgan, encoder, fr, age).
    fn train(&self, py: Python<'_>, net: &str) -> PyResult<()> {
        let net: Network = net.parse().map_err(err)?;
        py.detach(|| core_pipeline::train(&self.ws, net, &self.cfg))
            .map_err(err)
    }

    /// Every evaluation metric by name.
    fn evaluate(&self, py: Python<'_>) -> PyResult<BTreeMap<String, f64>> {
        let report = py
            .detach(|| core_pipeline::evaluate(&self.ws, &self.cfg))
            .map_err(err)?;
        Ok(report
            .metrics
            .into_iter()
            .map(|m| (m.metric, m.value))
            .collect())
    }

    fn checkpoint(&self, arch: &str) -> PyResult<Checkpoint> {
        let arch = arch.parse().map_err(err)?;
        self.ws
            .load_checkpoint(arch)
            .map(|inner| Checkpoint { inner })
            .map_err(err)
    }
}

#[pymodule]
fn agecgan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LATENT_DIM", LATENT_DIM)?;
    m.add("AGE_CATEGORIES", synth::AGE_CATEGORIES)?;
    m.add_class::<Corpus>()?;
    m.add_class::<Checkpoint>()?;
    m.add_class::<Pipeline>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(age_swap, m)?)?;
    m.add_function(wrap_pyfunction!(minimize, m)?)?;
    Ok(())
}
