//! foglab: experiment runner for gait-freeze detection pipelines.
//!
//! Exit codes: 0 success, 2 configuration/validation problems,
//! 3 runtime or numeric failures.

mod commands;
mod config;
mod outdir;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use foglab_core::{Error, Result};
use outdir::RunDir;

#[derive(Parser)]
#[command(name = "foglab", version, about = "Gait-freeze detection lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and merge CSV inputs into the canonical dataset layout
    Ingest(CommonArgs),
    /// Generate a synthetic IMU fixture dataset
    Synth(CommonArgs),
    /// Train the centralized tree and stacking models and report metrics
    TrainCentral(CommonArgs),
    /// Nested cross-validation with an inner hyperparameter grid
    NestedCv(CommonArgs),
    /// Exact Shapley attributions for a saved model file
    Explain(ExplainArgs),
    /// Federated simulation over per-user clients
    Federate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's out_dir
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Master seed; overrides the config's seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Model file written by train-central
    #[arg(long)]
    model: PathBuf,
}

fn prepare(args: &CommonArgs) -> Result<(ExperimentConfig, RunDir)> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(dir) = &args.out_dir {
        config.out_dir = Some(dir.display().to_string());
    }
    let out_dir = config
        .out_dir
        .clone()
        .ok_or_else(|| Error::Schema("no output directory (set out_dir or pass --out-dir)".into()))?;
    let run = RunDir::create(Path::new(&out_dir))?;
    // archive the experiment parameters; the output location is implied
    // by where the archive sits and would break rerun comparisons
    let mut archived = config.clone();
    archived.out_dir = None;
    run.write("resolved_config.toml", archived.render_resolved()?)?;
    Ok((config, run))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(args) => {
            let (config, mut run) = prepare(&args)?;
            commands::cmd_ingest(&config, &mut run)?;
            run.finish("ingest")
        }
        Command::Synth(args) => {
            let (config, mut run) = prepare(&args)?;
            commands::cmd_synth(&config, &mut run)?;
            run.finish("synth")
        }
        Command::TrainCentral(args) => {
            let (config, mut run) = prepare(&args)?;
            commands::cmd_train_central(&config, &mut run)?;
            run.finish("train-central")
        }
        Command::NestedCv(args) => {
            let (config, mut run) = prepare(&args)?;
            commands::cmd_nested_cv(&config, &mut run)?;
            run.finish("nested-cv")
        }
        Command::Explain(args) => {
            let (config, mut run) = prepare(&args.common)?;
            commands::cmd_explain(&config, &mut run, &args.model)?;
            run.finish("explain")
        }
        Command::Federate(args) => {
            let (config, mut run) = prepare(&args)?;
            commands::cmd_federate(&config, &mut run)?;
            run.finish("federate")
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
