//! Batch front end: ingest an experiment config, run the analysis /
//! selection / simulation / reconstruction pipelines, and emit CSV and JSON
//! artifacts.

mod config;
mod emit;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::Config;
use emit::{config_hash, Emitter};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl From<dqst::Error> for CliError {
    fn from(e: dqst::Error) -> Self {
        use dqst::Error::*;
        match e {
            RankDeficient { .. } | TargetNotReconstructable { .. } => {
                CliError::Infeasible(e.to_string())
            }
            Linalg(_) | NonFinite(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Infeasible(_) => "infeasible",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }
}

#[derive(Parser)]
#[command(
    name = "dqst",
    about = "Dynamical quantum state tomography: observability analysis, measurement \
             selection, simulation and reconstruction",
    version
)]
struct Cli {
    /// Experiment config (TOML). Optional for the reproduce commands.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Absolute singular-value threshold overriding the rank policy.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Project the reconstructed state onto the density-matrix cone.
    #[arg(long, global = true)]
    psd_project: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Observability analysis (Kalman rank report).
    Analyze,
    /// Greedy selection of observables and measurement times.
    Select,
    /// Simulate measurement records along the selected plan.
    Simulate,
    /// Simulate and reconstruct the state by linear inversion.
    Reconstruct,
    /// Reconstruct expectations of a target observable.
    Target,
    /// Randomized observability trials over a parametric model.
    Genericity,
    /// Built-in reproduction pipelines.
    Reproduce {
        #[command(subcommand)]
        which: ReproduceWhich,
    },
}

#[derive(Subcommand, Clone)]
enum ReproduceWhich {
    /// Four-site chain: observability, genericity, plan and error scaling.
    SpinChain,
    /// Electron-nuclear model: observability, coefficients and error scaling.
    NvCenter,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let (text, hash) = match &cli.config {
        Some(path) => {
            let bytes = std::fs::read(path)
                .map_err(|e| CliError::Config(format!("read {}: {e}", path.display())))?;
            let text = String::from_utf8(bytes.clone())
                .map_err(|_| CliError::Config("config is not UTF-8".into()))?;
            (text, config_hash(&bytes))
        }
        None => match cli.command {
            Command::Reproduce { .. } => (
                "schema = 1\n".to_string(),
                config_hash(b"builtin-reproduction-defaults-v1"),
            ),
            _ => return Err(CliError::Config("--config <path> is required".into())),
        },
    };
    let config = Config::parse(&text)?;
    let out_dir = cli
        .out
        .clone()
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let seed = cli.seed.or(config.seed);
    let emitter = Emitter::new(&out_dir, hash, seed)?;
    let ctx = pipeline::Ctx {
        config: &config,
        emitter,
        seed,
        rank_tol_override: cli.tol,
        psd_project: cli.psd_project,
    };
    match &cli.command {
        Command::Analyze => pipeline::analyze(&ctx),
        Command::Select => pipeline::select(&ctx),
        Command::Simulate => pipeline::simulate(&ctx),
        Command::Reconstruct => pipeline::reconstruct(&ctx),
        Command::Target => pipeline::target(&ctx),
        Command::Genericity => pipeline::genericity(&ctx),
        Command::Reproduce { which } => match which {
            ReproduceWhich::SpinChain => pipeline::reproduce_spin_chain(&ctx),
            ReproduceWhich::NvCenter => pipeline::reproduce_nv_center(&ctx),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let reason = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
            });
            eprintln!("{reason}");
            ExitCode::from(e.exit_code())
        }
    }
}
