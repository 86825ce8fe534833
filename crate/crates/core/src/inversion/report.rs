use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use super::objective::{
    initial_approximation, optimize_identity_preserving, optimize_pixelwise, InitialApproximation,
    LatentFit,
};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::models::{embed, stack_images, ModelCheckpoint};
use crate::optim::LbfgsbConfig;
use crate::synth::AgeCategory;
use crate::training::euclidean;

pub const REPORT_HEADER: &str = "image_id,mode,f_init,f_final,iters,emb_dist,pix_dist";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReconstructionMode {
    Initial,
    Pixelwise,
    IdentityPreserving,
}

impl ReconstructionMode {
    pub const ALL: [ReconstructionMode; 3] = [
        ReconstructionMode::Initial,
        ReconstructionMode::Pixelwise,
        ReconstructionMode::IdentityPreserving,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReconstructionMode::Initial => "initial",
            ReconstructionMode::Pixelwise => "pixel",
            ReconstructionMode::IdentityPreserving => "ip",
        }
    }
}

impl fmt::Display for ReconstructionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReconstructionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mode `{s}` (initial|pixel|ip)")))
    }
}

#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    pub image_id: String,
    pub y0: AgeCategory,
    pub initial: InitialApproximation,
    pub pixel: Option<LatentFit>,
    pub ip: Option<LatentFit>,
    /// Wall-clock per phase; never written to reports.
    pub timings: Vec<(ReconstructionMode, Duration)>,
}

impl ReconstructionResult {
    pub fn latent(&self, mode: ReconstructionMode) -> Option<&[f32]> {
        match mode {
            ReconstructionMode::Initial => Some(&self.initial.z0),
            ReconstructionMode::Pixelwise => self.pixel.as_ref().map(|f| f.z.as_slice()),
            ReconstructionMode::IdentityPreserving => self.ip.as_ref().map(|f| f.z.as_slice()),
        }
    }

    pub fn image(&self, mode: ReconstructionMode) -> Option<&Tensor> {
        match mode {
            ReconstructionMode::Initial => Some(&self.initial.image),
            ReconstructionMode::Pixelwise => self.pixel.as_ref().map(|f| &f.image),
            ReconstructionMode::IdentityPreserving => self.ip.as_ref().map(|f| &f.image),
        }
    }

    pub fn fit(&self, mode: ReconstructionMode) -> Option<&LatentFit> {
        match mode {
            ReconstructionMode::Initial => None,
            ReconstructionMode::Pixelwise => self.pixel.as_ref(),
            ReconstructionMode::IdentityPreserving => self.ip.as_ref(),
        }
    }

    /// One report row per available mode, measured against the input `x`.
    pub fn rows(&self, fr: &ModelCheckpoint, x: &Tensor) -> Result<Vec<ReportRow>> {
        let modes: Vec<_> = ReconstructionMode::ALL
            .into_iter()
            .filter(|&m| self.image(m).is_some())
            .collect();
        let mut images = vec![x];
        images.extend(modes.iter().map(|&m| self.image(m).expect("filtered")));
        let e = embed(fr, &stack_images(images.iter().copied())?)?;
        let d = e.shape()[1];
        let emb = |i: usize| &e.data()[i * d..(i + 1) * d];
        Ok(modes
            .iter()
            .enumerate()
            .map(|(k, &mode)| {
                let image = self.image(mode).expect("filtered");
                let pix_dist = euclidean(x.data(), image.data());
                let (f_init, f_final, iters) = match self.fit(mode) {
                    Some(f) => (f.f_init, f.f_final, f.iterations),
                    None => (pix_dist * pix_dist, pix_dist * pix_dist, 0),
                };
                ReportRow {
                    image_id: self.image_id.clone(),
                    mode,
                    f_init,
                    f_final,
                    iters,
                    emb_dist: euclidean(emb(0), emb(k + 1)),
                    pix_dist,
                }
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub image_id: String,
    pub mode: ReconstructionMode,
    pub f_init: f64,
    pub f_final: f64,
    pub iters: usize,
    /// `‖FR(x) − FR(x̄)‖`.
    pub emb_dist: f64,
    /// `‖x − x̄‖`.
    pub pix_dist: f64,
}

pub fn write_report(rows: &[ReportRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{},{:.6},{:.6}",
            r.image_id, r.mode, r.f_init, r.f_final, r.iters, r.emb_dist, r.pix_dist
        )?;
    }
    Ok(())
}

/// Run the initial approximation and each requested optimizer on `x`.
#[allow(clippy::too_many_arguments)]
pub fn reconstruct(
    image_id: &str,
    x: &Tensor,
    y0: AgeCategory,
    g: &ModelCheckpoint,
    e: &ModelCheckpoint,
    fr: &ModelCheckpoint,
    modes: &[ReconstructionMode],
    config: &LbfgsbConfig,
) -> Result<ReconstructionResult> {
    let t = Instant::now();
    let initial = initial_approximation(e, g, x, y0)?;
    let mut timings = vec![(ReconstructionMode::Initial, t.elapsed())];
    let mut pixel = None;
    let mut ip = None;
    if modes.contains(&ReconstructionMode::Pixelwise) {
        let t = Instant::now();
        pixel = Some(optimize_pixelwise(g, x, &initial.z0, y0, config)?);
        timings.push((ReconstructionMode::Pixelwise, t.elapsed()));
    }
    if modes.contains(&ReconstructionMode::IdentityPreserving) {
        let t = Instant::now();
        ip = Some(optimize_identity_preserving(
            g,
            fr,
            x,
            &initial.z0,
            y0,
            config,
        )?);
        timings.push((ReconstructionMode::IdentityPreserving, t.elapsed()));
    }
    Ok(ReconstructionResult {
        image_id: image_id.to_string(),
        y0,
        initial,
        pixel,
        ip,
        timings,
    })
}
