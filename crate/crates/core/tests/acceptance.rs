//! End-to-end acceptance suite. Runs the full pipeline twice at default
//! settings and prints one PASS/FAIL line per criterion.
//!
//! `AGECGAN_ACCEPTANCE_OUT=<dir>` keeps the two runs under `<dir>/run_a` and
//! `<dir>/run_b`; otherwise a temporary directory is used.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use agecgan_core::eval::{EvalReport, REFERENCE_AGE_GAP};
use agecgan_core::models::{Architecture, ModelCheckpoint};
use agecgan_core::optim::{lbfgsb_minimize, Bounds, LbfgsbConfig};
use agecgan_core::pipeline::{self, PipelineConfig, Workspace};
use agecgan_core::training::{independent_pair_baseline, Network};
use common::problems::{reference_solve, rosenbrock, BoxQuadratic};
use common::suites::{composite_cases, primitive_cases, COMPOSITE_TOL, PRIMITIVE_TOL};

const ARCHS: [Architecture; 5] = [
    Architecture::Generator,
    Architecture::Discriminator,
    Architecture::Encoder,
    Architecture::FaceRecognizer,
    Architecture::AgeEstimator,
];

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

struct Run {
    ws: Workspace,
    report: EvalReport,
    cgan_time: Duration,
    total_time: Duration,
}

fn run_pipeline(root: PathBuf, cfg: &PipelineConfig) -> Run {
    let ws = Workspace::new(root);
    let start = Instant::now();
    pipeline::synth_data(&ws, cfg).expect("synth-data");
    let t = Instant::now();
    pipeline::train(&ws, Network::Cgan, cfg).expect("train cgan");
    let cgan_time = t.elapsed();
    for net in [Network::Encoder, Network::Fr, Network::Age] {
        pipeline::train(&ws, net, cfg).unwrap_or_else(|e| panic!("train {net}: {e}"));
    }
    let report = pipeline::evaluate(&ws, cfg).expect("evaluate");
    Run {
        ws,
        report,
        cgan_time,
        total_time: start.elapsed(),
    }
}

fn metric(r: &EvalReport, key: &str) -> f64 {
    r.get(key).unwrap_or_else(|| panic!("report lacks {key}"))
}

fn metric_n(r: &EvalReport, key: &str) -> usize {
    r.metrics
        .iter()
        .find(|m| m.metric == key)
        .map_or(0, |m| m.n)
}

fn gradient_suite(g: &ModelCheckpoint, fr: &ModelCheckpoint) -> Outcome {
    let t = Instant::now();
    let prim = primitive_cases();
    let comp = composite_cases(g, fr);
    let elapsed = t.elapsed();
    let worst_prim = prim.iter().map(|c| c.1).fold(0.0, f64::max);
    let worst_comp = comp.iter().map(|c| c.1).fold(0.0, f64::max);
    let failing: Vec<&str> = prim
        .iter()
        .filter(|c| !(c.1 < PRIMITIVE_TOL))
        .chain(comp.iter().filter(|c| !(c.1 < COMPOSITE_TOL)))
        .map(|c| c.0.as_str())
        .collect();
    Outcome {
        id: 1,
        name: "gradient suite",
        pass: failing.is_empty() && elapsed < Duration::from_secs(60),
        detail: format!(
            "{} primitive cases worst {worst_prim:.2e}, {} composite cases worst {worst_comp:.2e}, {:.1}s{}",
            prim.len(),
            comp.len(),
            elapsed.as_secs_f64(),
            if failing.is_empty() { String::new() } else { format!(", failing {failing:?}") }
        ),
    }
}

fn optimizer_suite() -> Outcome {
    let mut problems = Vec::new();
    let bounds = Bounds::uniform(2, -3.0, 3.0);
    let cfg = LbfgsbConfig {
        max_iter: 200,
        ..LbfgsbConfig::default()
    };
    let mut visited = Vec::new();
    let r = lbfgsb_minimize(
        |x: &[f64]| {
            visited.push(x.to_vec());
            rosenbrock(x)
        },
        &[-1.2, 1.0],
        &bounds,
        &cfg,
    )
    .expect("rosenbrock");
    let (xr, _) = reference_solve(rosenbrock, &[-1.2, 1.0], -3.0, 3.0);
    let rosen_ok = r.f < 1e-6
        && r.x.iter().zip(&xr).all(|(a, b)| (a - b).abs() < 1e-4)
        && r.trace.windows(2).all(|w| w[1].f <= w[0].f)
        && visited.iter().all(|x| bounds.contains(x));
    if !rosen_ok {
        problems.push(format!(
            "rosenbrock f={:.2e} x={:?} reference {:?}",
            r.f, r.x, xr
        ));
    }
    let mut worst: f64 = 0.0;
    for seed in 0..40u64 {
        let dim = 2 + (seed as usize % 4);
        let q = BoxQuadratic::random(dim, seed);
        let expected = q.brute_force();
        let bounds = Bounds::uniform(dim, q.lo, q.hi);
        let cfg = LbfgsbConfig {
            tol: 1e-9,
            max_iter: 500,
            ..LbfgsbConfig::default()
        };
        let mut visited = Vec::new();
        let r = lbfgsb_minimize(
            |x: &[f64]| {
                visited.push(x.to_vec());
                q.eval(x)
            },
            &vec![0.0; dim],
            &bounds,
            &cfg,
        )
        .expect("quadratic");
        let err =
            r.x.iter()
                .zip(&expected)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
        worst = worst.max(err);
        if err >= 1e-4
            || !r.trace.windows(2).all(|w| w[1].f <= w[0].f)
            || !visited.iter().all(|x| bounds.contains(x))
        {
            problems.push(format!("quadratic {seed}: max |x - x*| {err:.2e}"));
        }
    }
    Outcome {
        id: 2,
        name: "optimizer suite",
        pass: problems.is_empty(),
        detail: format!(
            "rosenbrock f={:.2e} in {} iterations; 40 box quadratics worst error {worst:.2e}{}",
            r.f,
            r.iterations,
            if problems.is_empty() {
                String::new()
            } else {
                format!("; {}", problems.join("; "))
            }
        ),
    }
}

/// `(epoch, mean acc_d)` and whether every loss is finite.
fn cgan_log_stats(path: &Path) -> (Vec<(usize, f64)>, bool) {
    let text = fs::read_to_string(path).expect("cgan log");
    let mut finite = true;
    let mut acc: Vec<(usize, f64, usize)> = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let epoch: usize = f[0].parse().unwrap();
        let vals: Vec<f64> = f[2..].iter().map(|v| v.parse().unwrap()).collect();
        finite &= vals.iter().all(|v| v.is_finite());
        match acc.last_mut() {
            Some((e, s, n)) if *e == epoch => {
                *s += vals[2];
                *n += 1;
            }
            _ => acc.push((epoch, vals[2], 1)),
        }
    }
    (
        acc.into_iter().map(|(e, s, n)| (e, s / n as f64)).collect(),
        finite,
    )
}

fn adversarial(a: &Run, b: &Run) -> Outcome {
    let log = |r: &Run| r.ws.log_path(Network::Cgan);
    let (acc, finite) = cgan_log_stats(&log(a));
    let late: Vec<f64> = acc
        .iter()
        .filter(|(e, _)| *e > 3)
        .map(|(_, v)| *v)
        .collect();
    let lo = late.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = late.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let identical = fs::read(log(a)).unwrap() == fs::read(log(b)).unwrap();
    let pass = acc.len() == 30
        && finite
        && !late.is_empty()
        && lo >= 0.5
        && hi <= 0.98
        && identical
        && a.cgan_time < Duration::from_secs(7200);
    Outcome {
        id: 3,
        name: "adversarial training",
        pass,
        detail: format!(
            "{} epochs, finite {finite}, D accuracy after epoch 3 in [{lo:.3}, {hi:.3}], rerun log identical {identical}, {:.1} min",
            acc.len(),
            a.cgan_time.as_secs_f64() / 60.0
        ),
    }
}

fn encoder_quality(ws: &Workspace) -> Outcome {
    let e = ws.load_checkpoint(Architecture::Encoder).unwrap();
    let loss: f64 = e.meta("heldout_loss").unwrap().parse().unwrap();
    let before: f64 = e.meta("initial_heldout_loss").unwrap().parse().unwrap();
    let bound = independent_pair_baseline() / 2.0;
    Outcome {
        id: 4,
        name: "encoder quality",
        pass: loss < bound,
        detail: format!(
            "held-out mean squared latent error {loss:.3} (untrained {before:.3}), bound {bound}"
        ),
    }
}

fn fr_ordering(r: &EvalReport) -> Outcome {
    let (init, pix, ip) = (
        metric(r, "fr_rate_initial"),
        metric(r, "fr_rate_pixel"),
        metric(r, "fr_rate_ip"),
    );
    let n = metric_n(r, "fr_rate_ip");
    Outcome {
        id: 5,
        name: "verification ordering",
        pass: n >= 100 && ip >= pix && pix >= init && ip - init >= 0.10,
        detail: format!(
            "n={n}: initial {init:.3}, pixel {pix:.3}, identity-preserving {ip:.3}, gain {:.3}",
            ip - init
        ),
    }
}

fn dominance(r: &EvalReport) -> Outcome {
    let (p, i) = (metric(r, "dominance_pixel"), metric(r, "dominance_ip"));
    Outcome {
        id: 6,
        name: "objective dominance",
        pass: p == 1.0 && i == 1.0,
        detail: format!(
            "final <= initial objective: pixel {:.1}%, identity-preserving {:.1}%",
            100.0 * p,
            100.0 * i
        ),
    }
}

fn trade_off(r: &EvalReport) -> Outcome {
    let (pp, pi) = (
        metric(r, "pix_dist_mean_pixel"),
        metric(r, "pix_dist_mean_ip"),
    );
    let (ep, ei) = (
        metric(r, "emb_dist_mean_pixel"),
        metric(r, "emb_dist_mean_ip"),
    );
    Outcome {
        id: 7,
        name: "trade-off direction",
        pass: pp < pi && ei < ep,
        detail: format!(
            "pixel L2 pixel {pp:.3} < ip {pi:.3}; embedding distance ip {ei:.4} < pixel {ep:.4}"
        ),
    }
}

fn age_control(r: &EvalReport) -> Outcome {
    let (gen, real, gap) = (
        metric(r, "age_acc_generated"),
        metric(r, "age_acc_real"),
        metric(r, "age_relative_gap"),
    );
    Outcome {
        id: 8,
        name: "age control",
        pass: gen >= 0.5,
        detail: format!(
            "generated {gen:.3}, real {real:.3}, relative gap {:.1}% (reference figure {:.0}%)",
            100.0 * gap,
            100.0 * REFERENCE_AGE_GAP
        ),
    }
}

fn age_swap(r: &EvalReport) -> Outcome {
    let ret = metric(r, "age_swap_retention");
    Outcome {
        id: 9,
        name: "age-swap identity retention",
        pass: ret >= 0.6,
        detail: format!(
            "{:.1}% of {} swaps verified; swapped-age agreement {:.3}",
            100.0 * ret,
            metric_n(r, "age_swap_retention"),
            metric(r, "age_swap_agreement")
        ),
    }
}

fn disentanglement(r: &EvalReport) -> Outcome {
    let (fixed, varying) = (metric(r, "disent_fixed_z"), metric(r, "disent_varying_z"));
    let n = metric_n(r, "disent_fixed_z");
    Outcome {
        id: 10,
        name: "disentanglement",
        pass: n >= 200 && fixed < varying,
        detail: format!("n={n}: fixed z {fixed:.4} < varying z {varying:.4}"),
    }
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism(a: &Run, b: &Run, scratch: &Path) -> Outcome {
    let mut round_trip = true;
    for arch in ARCHS {
        let stem = a.ws.checkpoint_stem(arch);
        let ckpt = ModelCheckpoint::load(&stem).unwrap();
        let copy = scratch.join(arch.name());
        ckpt.save(&copy).unwrap();
        let again = ModelCheckpoint::load(&copy).unwrap();
        round_trip &= again == ckpt
            && fs::read(ModelCheckpoint::blob_path(&stem)).unwrap()
                == fs::read(ModelCheckpoint::blob_path(&copy)).unwrap()
            && fs::read(ModelCheckpoint::manifest_path(&stem)).unwrap()
                == fs::read(ModelCheckpoint::manifest_path(&copy)).unwrap();
    }
    let fa = files_under(&a.ws.root);
    let fb = files_under(&b.ws.root);
    let differing: Vec<String> = fa
        .iter()
        .filter(|p| fs::read(a.ws.root.join(p)).ok() != fs::read(b.ws.root.join(p)).ok())
        .map(|p| p.display().to_string())
        .collect();
    Outcome {
        id: 11,
        name: "determinism and formats",
        pass: round_trip && fa == fb && differing.is_empty(),
        detail: format!(
            "checkpoint round trip {round_trip}; {} files compared, {} differ{}",
            fa.len(),
            differing.len(),
            differing
                .first()
                .map(|p| format!(" (first: {p})"))
                .unwrap_or_default()
        ),
    }
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let temp;
    let root = match std::env::var_os("AGECGAN_ACCEPTANCE_OUT") {
        Some(dir) => PathBuf::from(dir),
        None => {
            temp = tempfile::tempdir().unwrap();
            temp.path().to_path_buf()
        }
    };
    let _ = fs::remove_dir_all(root.join("run_a"));
    let _ = fs::remove_dir_all(root.join("run_b"));
    let cfg = PipelineConfig::default();

    let mut outcomes = vec![optimizer_suite()];
    let a = run_pipeline(root.join("run_a"), &cfg);
    println!(
        "pipeline run A finished in {:.1} min",
        a.total_time.as_secs_f64() / 60.0
    );
    let b = run_pipeline(root.join("run_b"), &cfg);
    println!(
        "pipeline run B finished in {:.1} min",
        b.total_time.as_secs_f64() / 60.0
    );

    let g = a.ws.load_checkpoint(Architecture::Generator).unwrap();
    let fr = a.ws.load_checkpoint(Architecture::FaceRecognizer).unwrap();
    outcomes.insert(0, gradient_suite(&g, &fr));
    outcomes.push(adversarial(&a, &b));
    outcomes.push(encoder_quality(&a.ws));
    outcomes.push(fr_ordering(&a.report));
    outcomes.push(dominance(&a.report));
    outcomes.push(trade_off(&a.report));
    outcomes.push(age_control(&a.report));
    outcomes.push(age_swap(&a.report));
    outcomes.push(disentanglement(&a.report));
    let scratch = root.join("roundtrip");
    fs::create_dir_all(&scratch).unwrap();
    outcomes.push(determinism(&a, &b, &scratch));

    println!();
    for o in &outcomes {
        println!(
            "{} {:>2}. {}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.detail
        );
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("\nacceptance: {passed}/{} criteria passed", outcomes.len());
    if passed == outcomes.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
