mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Failure;
use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "pyramid", version, about = "Volumetric segmentation with pyramidal convolutional LSTMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides `run.threads` (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Overrides `run.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Writes the hollow-ellipsoid toy dataset (raw volumes and labels).
    Synth,
    /// Assembles normalized network inputs from raw modality volumes.
    Preprocess,
    /// Trains a network through the configured stages.
    Train {
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Tiled prediction of every test case.
    Predict,
    /// Metrics of stored predictions against reference labels.
    Evaluate,
    /// Forward-pass wall time at several thread counts.
    Bench,
    /// Layer-by-layer parameter counts.
    ParamCount,
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.run.threads = t;
    }
    if let Some(o) = &cli.out {
        cfg.run.out = o.clone();
    }
    cfg.resolve();
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    if cfg.run.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.threads)
            .build_global()
            .map_err(|e| Failure::runtime(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Preprocess => commands::preprocess(&cfg),
        Command::Train { resume } => commands::train(&cfg, resume.as_deref()),
        Command::Predict => commands::predict(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Bench => commands::bench(&cfg),
        Command::ParamCount => commands::param_count(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.kind(), f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
