//! `resot`: feature extraction, training, compression, inference and
//! benchmarking of resource-efficient oblique trees.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Overrides, SynthKind};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "resot", version, about = "Resource-efficient oblique trees")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ModelInput {
    /// Encoded `.resot` model.
    #[arg(long)]
    pub model: PathBuf,
    /// Scaler JSON; defaults to `scaler.json` next to the model when present.
    #[arg(long)]
    pub scaler: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Recording (CSV or .rsig) to a feature CSV.
    Extract {
        #[arg(long)]
        input: PathBuf,
        /// CSV with a `label` column, one row per window.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        sample_rate: Option<f64>,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long, value_enum)]
        kind: Option<SynthKind>,
        #[arg(long)]
        windows: Option<usize>,
        /// Also write the raw recording and its window labels (neural only).
        #[arg(long)]
        signals: bool,
    },
    /// Pretrain and prune; weights stay unshared.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Prune and share the weights of a saved model.
    Compress {
        #[command(flatten)]
        input: ModelInput,
        #[arg(long)]
        data: PathBuf,
    },
    /// Single-path predictions with the visited path and its feature cost.
    Infer {
        #[command(flatten)]
        input: ModelInput,
        #[arg(long)]
        data: PathBuf,
    },
    /// Block-wise cross-validated benchmark; synthesizes data when none is given.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        windows: Option<usize>,
    },
    /// Static feature-cost report for a model.
    Cost {
        #[command(flatten)]
        input: ModelInput,
        /// Supplies feature names and the mean single-path power.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Graphviz rendering of a model.
    ExportDot {
        #[command(flatten)]
        input: ModelInput,
        /// Supplies feature names and per-node class histograms.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Largest weights listed per split.
        #[arg(long, default_value_t = 3)]
        top: usize,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("RESOT_THREADS") else { return Ok(()) };
    let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Config(format!("RESOT_THREADS={v}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    match init_threads().and_then(|()| commands::run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("resot: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
