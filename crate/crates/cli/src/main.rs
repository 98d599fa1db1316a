mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use onflow::architectures::ArchitectureKind;
use onflow::pipeline::Task;
use onflow::Error;

use crate::config::EvalSplit;

#[derive(Debug, Parser)]
#[command(name = "onflow", version, about = "Onflow-parameter prediction from airfoil surface pressure")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Random seed for initialization and shuffling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a Halton design of experiments.
    Doe {
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        start_index: Option<u64>,
    },
    /// Solve the flow at every DoE point and write a pressure dataset.
    Generate {
        /// DoE file; a fresh plan from the config is used when omitted.
        #[arg(long)]
        doe: Option<PathBuf>,
        /// A (inviscid) or B (stall corrected).
        #[arg(long)]
        fidelity: Option<String>,
        /// Airfoil coordinate file.
        #[arg(long)]
        geometry: Option<PathBuf>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        noise_copies: Option<usize>,
    },
    /// Offline training on one dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        arch: Option<ArchitectureKind>,
        #[arg(long)]
        n_s: Option<usize>,
        #[arg(long)]
        task: Option<Task>,
        #[command(flatten)]
        training: TrainingFlags,
    },
    /// Retrain the last linear layers of a trained network on a target dataset.
    Transfer {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Target-domain dataset.
        #[arg(long)]
        dataset: PathBuf,
        /// Source-domain dataset; its test slice scores both networks.
        #[arg(long)]
        source_dataset: PathBuf,
        /// Number of trailing linear layers to retrain (1 or 2).
        #[arg(short = 'k', long)]
        last_k: Option<usize>,
        #[arg(long)]
        task: Option<Task>,
        #[arg(long)]
        target_domain: Option<String>,
        #[command(flatten)]
        training: TrainingFlags,
    },
    /// Score a checkpoint on a dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        split: Option<EvalSplit>,
    },
    /// Run a scenario from a spec file or a bundled spec name.
    Experiment {
        /// Spec file path or bundled name (see --list).
        scenario: Option<String>,
        /// Reuse offline networks across runs.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        /// Print bundled scenario names.
        #[arg(long)]
        list: bool,
    },
}

#[derive(Debug, Args)]
pub struct TrainingFlags {
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 2,
        Error::Parse { .. } | Error::Io { .. } => 3,
        Error::Numerical(_) | Error::State(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.common.quiet, cli.common.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        (false, _) => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp_secs().init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
