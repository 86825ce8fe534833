use std::path::PathBuf;
use std::process::ExitCode;

use agecgan_core::inversion::ReconstructionMode;
use agecgan_core::pipeline::{self, PipelineConfig, Workspace};
use agecgan_core::synth::AgeCategory;
use agecgan_core::training::{Network, Settings};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

const AGE_HELP: &str =
    "age category: 0 = 0-18, 1 = 19-29, 2 = 30-39, 3 = 40-49, 4 = 50-59, 5 = 60+";

/// Face aging with an age-conditional GAN.
#[derive(Debug, Parser)]
#[command(name = "agecgan", version)]
struct Cli {
    /// `key = value` settings file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root directory for all outputs.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the synthetic face corpus and its manifest.
    SynthData,
    /// Train one network.
    Train {
        #[arg(long, value_parser = parse_network)]
        net: Network,
    },
    /// Reconstruct the held-out evaluation images.
    Reconstruct {
        #[arg(long, value_parser = parse_mode, default_value = "ip")]
        mode: ReconstructionMode,
    },
    /// Re-render a face at another age.
    Age {
        /// Input PNG.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, help = AGE_HELP, value_parser = parse_age)]
        target: AgeCategory,
        /// Known age of the input; estimated when omitted.
        #[arg(long, value_parser = parse_age)]
        age: Option<AgeCategory>,
    },
    /// Compute every evaluation metric.
    Evaluate,
    /// Render latent-row and aged-face montages.
    Grid {
        #[arg(long, default_value_t = 2)]
        rows: usize,
    },
}

fn parse_network(s: &str) -> Result<Network, String> {
    s.parse().map_err(|e: agecgan_core::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<ReconstructionMode, String> {
    s.parse().map_err(|e: agecgan_core::Error| e.to_string())
}

fn parse_age(s: &str) -> Result<AgeCategory, String> {
    let i: usize = s
        .parse()
        .map_err(|_| format!("`{s}` is not an integer in 0..5"))?;
    AgeCategory::new(i).map_err(|_| format!("{i} is out of range; {AGE_HELP}"))
}

fn settings(cli: &Cli) -> Result<Settings> {
    let mut s = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    if let Some(seed) = cli.seed {
        s.set("seed", seed);
    }
    Ok(s)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = PipelineConfig::from_settings(&settings(&cli)?)?;
    let ws = Workspace::new(&cli.out);
    match cli.command {
        Command::SynthData => {
            let corpus = pipeline::synth_data(&ws, &cfg)?;
            println!("{} images in {}", corpus.len(), ws.data_dir().display());
        }
        Command::Train { net } => {
            pipeline::train(&ws, net, &cfg).with_context(|| format!("training {net}"))?;
            println!("trained {net}; log at {}", ws.log_path(net).display());
        }
        Command::Reconstruct { mode } => {
            let corpus = ws.load_corpus()?;
            let r = pipeline::reconstruct_eval_set(&ws, &cfg, &corpus, &[mode])?;
            println!(
                "reconstructed {} images; report at {}",
                r.results.len(),
                ws.reconstruction_dir().join("report.csv").display()
            );
        }
        Command::Age { input, target, age } => {
            let path = pipeline::age_image(&ws, &cfg, &input, age, target)?;
            println!("{}", path.display());
        }
        Command::Evaluate => {
            let report = pipeline::evaluate(&ws, &cfg)?;
            print!("{}", report.summary());
        }
        Command::Grid { rows } => {
            for p in pipeline::grid(&ws, &cfg, rows)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AGECGAN_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
