//! End-to-end orchestration over a single output root.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::eval::{
    age_consistency_score, age_swap_scores, disentanglement_report, fr_verification_score,
    EvalReport, REFERENCE_AGE_GAP,
};
use crate::inversion::{
    age_swap, reconstruct, resolve_age, write_report, ReconstructionMode, ReconstructionResult,
};
use crate::models::{generate, Architecture, ModelCheckpoint};
use crate::optim::LbfgsbConfig;
use crate::synth::{
    generate_dataset, load_face, rng_for, save_montage, save_png, AgeCategory, Corpus, Sample,
    Split,
};
use crate::training::{
    fr_threshold, sample_latents, train_age_cgan, train_age_estimator, train_encoder, train_fr,
    write_cgan_log, write_epoch_log, Network, Settings, TrainConfig,
};

const SELECT_STREAM: u64 = 0x5e1;
const GRID_STREAM: u64 = 0x6a1d;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub data_seed: u64,
    pub n_identities: usize,
    pub samples_per_cell: usize,
    pub cgan: TrainConfig,
    pub encoder: TrainConfig,
    pub fr: TrainConfig,
    pub age: TrainConfig,
    pub eval_seed: u64,
    pub n_eval_images: usize,
    pub n_probes: usize,
    pub n_age_samples: usize,
    pub lbfgsb: LbfgsbConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::from_settings(&Settings::default()).expect("defaults are valid")
    }
}

impl PipelineConfig {
    /// Defaults overridden by `settings`; a bare `seed` key reseeds every
    /// stochastic stage.
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let global: Option<u64> = s.value("seed")?;
        let train = |net| -> Result<TrainConfig> {
            let mut c = TrainConfig::from_settings(net, s)?;
            if let (Some(seed), None) = (global, s.value::<u64>(&format!("{net}.seed"))?) {
                c.seed = seed;
            }
            Ok(c)
        };
        let mut lbfgsb = LbfgsbConfig::default();
        if let Some(v) = s.value("lbfgs.max_iter")? {
            lbfgsb.max_iter = v;
        }
        if let Some(v) = s.value("lbfgs.tol")? {
            lbfgsb.tol = v;
        }
        if let Some(v) = s.value("lbfgs.memory")? {
            lbfgsb.memory = v;
        }
        let cfg = Self {
            data_seed: s.value("data.seed")?.or(global).unwrap_or(7),
            n_identities: s.value("data.n_identities")?.unwrap_or(200),
            samples_per_cell: s.value("data.samples_per_cell")?.unwrap_or(5),
            cgan: train(Network::Cgan)?,
            encoder: train(Network::Encoder)?,
            fr: train(Network::Fr)?,
            age: train(Network::Age)?,
            eval_seed: s.value("eval.seed")?.or(global).unwrap_or(7),
            n_eval_images: s.value("eval.n_images")?.unwrap_or(100),
            n_probes: s.value("eval.n_probes")?.unwrap_or(200),
            n_age_samples: s.value("eval.n_age")?.unwrap_or(600),
            lbfgsb,
        };
        if cfg.n_eval_images == 0 {
            return Err(Error::Config("eval.n_images must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn train_config(&self, net: Network) -> &TrainConfig {
        match net {
            Network::Cgan => &self.cgan,
            Network::Encoder => &self.encoder,
            Network::Fr => &self.fr,
            Network::Age => &self.age,
        }
    }
}

/// Paths of every artifact under the output root.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn checkpoint_stem(&self, arch: Architecture) -> PathBuf {
        self.root.join("checkpoints").join(arch.name())
    }

    pub fn log_path(&self, net: Network) -> PathBuf {
        self.root.join("logs").join(format!("{net}.csv"))
    }

    pub fn reconstruction_dir(&self) -> PathBuf {
        self.root.join("reconstruction")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn grid_dir(&self) -> PathBuf {
        self.root.join("grids")
    }

    pub fn aged_dir(&self) -> PathBuf {
        self.root.join("aged")
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        Corpus::load(&self.data_dir())
    }

    pub fn load_checkpoint(&self, arch: Architecture) -> Result<ModelCheckpoint> {
        let stem = self.checkpoint_stem(arch);
        let manifest = ModelCheckpoint::manifest_path(&stem);
        if !manifest.exists() {
            let step = match arch {
                Architecture::Generator | Architecture::Discriminator => "train --net cgan",
                Architecture::Encoder => "train --net encoder",
                Architecture::FaceRecognizer => "train --net fr",
                Architecture::AgeEstimator => "train --net age",
            };
            return Err(Error::MissingArtifact {
                path: manifest,
                step: step.into(),
            });
        }
        ModelCheckpoint::load(&stem)
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    Ok(())
}

fn text_file(path: &Path) -> Result<BufWriter<File>> {
    create_parent(path)?;
    Ok(BufWriter::new(File::create(path)?))
}

pub fn synth_data(ws: &Workspace, cfg: &PipelineConfig) -> Result<Corpus> {
    let corpus = generate_dataset(cfg.n_identities, cfg.samples_per_cell, cfg.data_seed)?;
    corpus.write(&ws.data_dir())?;
    log::info!(
        "wrote {} images to {}",
        corpus.len(),
        ws.data_dir().display()
    );
    Ok(corpus)
}

/// Train one network and write its checkpoint(s) and loss log.
pub fn train(ws: &Workspace, net: Network, cfg: &PipelineConfig) -> Result<()> {
    let tc = cfg.train_config(net);
    match net {
        Network::Cgan => {
            let corpus = ws.load_corpus()?;
            let run = train_age_cgan(&corpus, tc)?;
            run.generator
                .save(&ws.checkpoint_stem(Architecture::Generator))?;
            run.discriminator
                .save(&ws.checkpoint_stem(Architecture::Discriminator))?;
            write_cgan_log(&run.log, text_file(&ws.log_path(net))?)?;
            if let Some(e) = run.aborted {
                return Err(e);
            }
        }
        Network::Encoder => {
            let g = ws.load_checkpoint(Architecture::Generator)?;
            let mut run = train_encoder(&g, tc)?;
            run.encoder.set_meta(
                "initial_heldout_loss",
                format!("{:.6}", run.initial_heldout_loss),
            );
            for (i, f) in run.age_frequencies.iter().enumerate() {
                run.encoder
                    .set_meta(&format!("age_frequency_{i}"), format!("{f:.6}"));
            }
            run.encoder
                .save(&ws.checkpoint_stem(Architecture::Encoder))?;
            write_epoch_log(&run.log, text_file(&ws.log_path(net))?)?;
        }
        Network::Fr => {
            let corpus = ws.load_corpus()?;
            let mut run = train_fr(&corpus, tc)?;
            run.fr
                .set_meta("heldout_accuracy", format!("{:.6}", run.heldout_accuracy));
            run.fr.set_meta(
                "heldout_cosine_within",
                format!("{:.6}", run.heldout_cosine_within),
            );
            run.fr.set_meta(
                "heldout_cosine_across",
                format!("{:.6}", run.heldout_cosine_across),
            );
            run.fr
                .save(&ws.checkpoint_stem(Architecture::FaceRecognizer))?;
            write_epoch_log(&run.log, text_file(&ws.log_path(net))?)?;
        }
        Network::Age => {
            let corpus = ws.load_corpus()?;
            let mut run = train_age_estimator(&corpus, tc)?;
            run.estimator
                .set_meta("heldout_mae", format!("{:.6}", run.heldout_mae));
            run.estimator
                .save(&ws.checkpoint_stem(Architecture::AgeEstimator))?;
            write_epoch_log(&run.log, text_file(&ws.log_path(net))?)?;
        }
    }
    Ok(())
}

pub fn image_id(sample: &Sample) -> String {
    Path::new(&sample.path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| sample.path.clone())
}

/// Seeded choice of `n` held-out images, in corpus order.
pub fn select_eval_images(corpus: &Corpus, n: usize, seed: u64) -> Vec<&Sample> {
    let test: Vec<&Sample> = corpus.split(Split::Test).collect();
    let mut idx: Vec<usize> = (0..test.len()).collect();
    idx.shuffle(&mut rng_for(seed, &[SELECT_STREAM]));
    idx.truncate(n);
    idx.sort_unstable();
    idx.into_iter().map(|i| test[i]).collect()
}

pub struct Reconstructions<'a> {
    pub inputs: Vec<&'a Sample>,
    pub results: Vec<ReconstructionResult>,
}

/// Reconstruct the evaluation images and write the report plus images.
pub fn reconstruct_eval_set<'a>(
    ws: &Workspace,
    cfg: &PipelineConfig,
    corpus: &'a Corpus,
    modes: &[ReconstructionMode],
) -> Result<Reconstructions<'a>> {
    let g = ws.load_checkpoint(Architecture::Generator)?;
    let e = ws.load_checkpoint(Architecture::Encoder)?;
    let fr = ws.load_checkpoint(Architecture::FaceRecognizer)?;
    let inputs = select_eval_images(corpus, cfg.n_eval_images, cfg.eval_seed);
    if inputs.is_empty() {
        return Err(Error::InvalidArgument(
            "corpus has no held-out images".into(),
        ));
    }
    let dir = ws.reconstruction_dir();
    fs::create_dir_all(dir.join("images"))?;
    let mut rows = Vec::new();
    let mut results = Vec::with_capacity(inputs.len());
    for (k, s) in inputs.iter().enumerate() {
        let id = image_id(s);
        let r = reconstruct(&id, &s.image, s.age, &g, &e, &fr, modes, &cfg.lbfgsb)?;
        let all_rows = r.rows(&fr, &s.image)?;
        rows.extend(
            all_rows
                .into_iter()
                .filter(|row| row.mode == ReconstructionMode::Initial || modes.contains(&row.mode)),
        );
        for mode in ReconstructionMode::ALL {
            if let Some(img) = r.image(mode) {
                save_png(img, &dir.join("images").join(format!("{id}_{mode}.png")))?;
            }
        }
        log::info!("reconstructed {id} ({}/{})", k + 1, inputs.len());
        results.push(r);
    }
    write_report(&rows, text_file(&dir.join("report.csv"))?)?;
    Ok(Reconstructions { inputs, results })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Full evaluation: reconstructions in all three modes, identity
/// verification, age control, age swaps and disentanglement.
pub fn evaluate(ws: &Workspace, cfg: &PipelineConfig) -> Result<EvalReport> {
    let corpus = ws.load_corpus()?;
    let g = ws.load_checkpoint(Architecture::Generator)?;
    let fr = ws.load_checkpoint(Architecture::FaceRecognizer)?;
    let a = ws.load_checkpoint(Architecture::AgeEstimator)?;
    let e = ws.load_checkpoint(Architecture::Encoder)?;
    let tau = fr_threshold(&fr)?;
    let recon = reconstruct_eval_set(ws, cfg, &corpus, &ReconstructionMode::ALL)?;
    let seed = cfg.eval_seed;
    let n = recon.results.len();
    let mut report = EvalReport::default();
    report.push("fr_tau", tau, 0, seed);
    for (key, ckpt) in [
        ("fr_heldout_accuracy", &fr),
        ("age_heldout_top1", &a),
        ("encoder_heldout_loss", &e),
    ] {
        let field = key.split_once('_').map(|(_, f)| f).unwrap_or(key);
        if let Some(v) = ckpt.meta(field).and_then(|v| v.parse().ok()) {
            report.push(key, v, 0, seed);
        }
    }
    for mode in ReconstructionMode::ALL {
        let pairs: Vec<(&Tensor, &Tensor)> = recon
            .inputs
            .iter()
            .zip(&recon.results)
            .map(|(s, r)| (&s.image, r.image(mode).expect("all modes run")))
            .collect();
        report.push(
            &format!("fr_rate_{mode}"),
            fr_verification_score(&fr, &pairs, tau)?,
            n,
            seed,
        );
        let rows: Vec<_> = recon
            .inputs
            .iter()
            .zip(&recon.results)
            .map(|(s, r)| r.rows(&fr, &s.image))
            .collect::<Result<_>>()?;
        let pick = |r: &Vec<crate::inversion::ReportRow>| {
            r.iter()
                .find(|x| x.mode == mode)
                .cloned()
                .expect("mode row")
        };
        report.push(
            &format!("emb_dist_mean_{mode}"),
            mean(rows.iter().map(|r| pick(r).emb_dist)),
            n,
            seed,
        );
        report.push(
            &format!("pix_dist_mean_{mode}"),
            mean(rows.iter().map(|r| pick(r).pix_dist)),
            n,
            seed,
        );
    }
    for mode in [
        ReconstructionMode::Pixelwise,
        ReconstructionMode::IdentityPreserving,
    ] {
        let ok = recon
            .results
            .iter()
            .filter(|r| {
                let f = r.fit(mode).expect("all modes run");
                f.fallback_to_init || f.f_final <= f.f_init
            })
            .count();
        report.push(&format!("dominance_{mode}"), ok as f64 / n as f64, n, seed);
    }
    let real: Vec<&Sample> = corpus.split(Split::Test).collect();
    let ages = age_consistency_score(&g, &a, &real, cfg.n_age_samples, seed)?;
    report.push("age_acc_generated", ages.acc_generated, ages.n, seed);
    report.push("age_acc_real", ages.acc_real, ages.n, seed);
    report.push("age_relative_gap", ages.relative_gap, ages.n, seed);
    report.push("age_relative_gap_reference", REFERENCE_AGE_GAP, 0, seed);
    let items: Vec<(&Tensor, &[f32], AgeCategory)> = recon
        .inputs
        .iter()
        .zip(&recon.results)
        .map(|(s, r)| {
            (
                &s.image,
                r.latent(ReconstructionMode::IdentityPreserving)
                    .expect("ip run"),
                r.y0,
            )
        })
        .collect();
    let swaps = age_swap_scores(&g, &fr, &a, tau, &items)?;
    report.push("age_swap_retention", swaps.retention, swaps.n_swaps, seed);
    report.push(
        "age_swap_agreement",
        swaps.age_agreement,
        swaps.n_swaps,
        seed,
    );
    let dis = disentanglement_report(&g, &fr, cfg.n_probes, seed)?;
    report.push("disent_fixed_z", dis.fixed_z, dis.n_probes, seed);
    report.push("disent_varying_z", dis.varying_z, dis.n_probes, seed);

    let dir = ws.eval_dir();
    report.write(text_file(&dir.join("report.csv"))?)?;
    fs::write(dir.join("summary.txt"), report.summary())?;
    Ok(report)
}

/// Generator grid (`rows` random latents × 6 ages) and, when reconstructions
/// are available, an aged grid of held-out inputs.
pub fn grid(ws: &Workspace, cfg: &PipelineConfig, rows: usize) -> Result<Vec<PathBuf>> {
    if rows == 0 {
        return Err(Error::InvalidArgument("grid needs at least one row".into()));
    }
    let g = ws.load_checkpoint(Architecture::Generator)?;
    let dir = ws.grid_dir();
    fs::create_dir_all(&dir)?;
    let mut rng = rng_for(cfg.eval_seed, &[GRID_STREAM]);
    let z = sample_latents(&mut rng, rows);
    let mut latents = Vec::new();
    let mut ages = Vec::new();
    for r in 0..rows {
        for a in AgeCategory::all() {
            latents.extend_from_slice(&z.data()[r * 64..(r + 1) * 64]);
            ages.push(a);
        }
    }
    let images = generate(&g, &Tensor::new(vec![rows * 6, 64], latents)?, &ages)?;
    let tiles: Vec<Tensor> = (0..rows * 6)
        .map(|i| crate::models::row(&images, i))
        .collect();
    let latent_grid = dir.join("latent_rows.png");
    save_montage(&tiles, rows, 6, &latent_grid)?;
    let mut written = vec![latent_grid];

    let has_models = [Architecture::Encoder, Architecture::FaceRecognizer]
        .iter()
        .all(|&a| ModelCheckpoint::manifest_path(&ws.checkpoint_stem(a)).exists());
    if has_models && ws.data_dir().join(crate::synth::MANIFEST_FILE).exists() {
        let corpus = ws.load_corpus()?;
        let e = ws.load_checkpoint(Architecture::Encoder)?;
        let fr = ws.load_checkpoint(Architecture::FaceRecognizer)?;
        let inputs: Vec<&Sample> = select_eval_images(&corpus, rows, cfg.eval_seed);
        let mut tiles = Vec::new();
        for s in &inputs {
            let r = reconstruct(
                &image_id(s),
                &s.image,
                s.age,
                &g,
                &e,
                &fr,
                &[ReconstructionMode::IdentityPreserving],
                &cfg.lbfgsb,
            )?;
            tiles.push(s.image.clone());
            let z = r
                .latent(ReconstructionMode::IdentityPreserving)
                .expect("ip run");
            for a in AgeCategory::all() {
                tiles.push(age_swap(&g, z, a)?);
            }
        }
        let aged = dir.join("aged_rows.png");
        save_montage(&tiles, inputs.len(), 7, &aged)?;
        written.push(aged);
    }
    Ok(written)
}

/// Reconstruct an arbitrary face with identity-preserving optimization and
/// render it at `target`.
pub fn age_image(
    ws: &Workspace,
    cfg: &PipelineConfig,
    input: &Path,
    known_age: Option<AgeCategory>,
    target: AgeCategory,
) -> Result<PathBuf> {
    let g = ws.load_checkpoint(Architecture::Generator)?;
    let e = ws.load_checkpoint(Architecture::Encoder)?;
    let fr = ws.load_checkpoint(Architecture::FaceRecognizer)?;
    let a = if known_age.is_none() {
        Some(ws.load_checkpoint(Architecture::AgeEstimator)?)
    } else {
        None
    };
    let x = load_face(input)?;
    let y0 = resolve_age(known_age, a.as_ref(), &x)?;
    let id = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into());
    let r = reconstruct(
        &id,
        &x,
        y0,
        &g,
        &e,
        &fr,
        &[ReconstructionMode::IdentityPreserving],
        &cfg.lbfgsb,
    )?;
    let aged = age_swap(
        &g,
        r.latent(ReconstructionMode::IdentityPreserving)
            .expect("ip run"),
        target,
    )?;
    let out = ws
        .aged_dir()
        .join(format!("{id}_age{}.png", target.index()));
    create_parent(&out)?;
    save_png(&aged, &out)?;
    Ok(out)
}
