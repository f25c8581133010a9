//! `hlreduce`: fit reducers, evaluate tasks, and run sweeps.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hlreduce_core::corpus::OutcomeKind;
use hlreduce_core::reduce::Method;

#[derive(Parser, Debug)]
#[command(name = "hlreduce", version, about = "Pre-trained dimension reduction for user-level embeddings")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct Global {
    /// Experiment config (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Reuse completed cells from an earlier run in the output directory
    #[arg(long, global = true)]
    pub resume: bool,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a reducer on pre-training embeddings and write it as EDR1
    FitReducer {
        /// Pre-training embeddings (defaults to the config's `pretrain`)
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        k: usize,
        /// Reducer file (default: <out>/<method>_k<k>.edr1)
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Apply a fitted reducer to an embedding table
    Transform {
        #[arg(long)]
        reducer: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Bootstrap-evaluate one task at one training size
    Evaluate {
        #[arg(long)]
        train_features: PathBuf,
        #[arg(long)]
        train_outcomes: PathBuf,
        #[arg(long)]
        test_features: PathBuf,
        #[arg(long)]
        test_outcomes: PathBuf,
        #[arg(long)]
        kind: OutcomeKind,
        #[arg(long)]
        n_ta: usize,
        /// Reducer applied to both splits before evaluation
        #[arg(long)]
        reducer: Option<PathBuf>,
        #[arg(long, default_value = "task")]
        task: String,
    },
    /// Run the full method x k x n_ta grid from the config
    Sweep,
    /// Rebuild the first-k-to-peak table from a results document
    Fkp {
        #[arg(long)]
        results: PathBuf,
    },
    /// Draw score-versus-k plots (SVG) from a results document
    Plot {
        #[arg(long)]
        results: PathBuf,
    },
    /// Average message-level embeddings into user-level embeddings
    Aggregate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Sample at most this many messages per user
        #[arg(long)]
        cap: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().expect("pool is built once");
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
