//! `pcmarg`: generate synthetic problems, train per-node circuits, build
//! exact tables, and evaluate posterior samples against the known graph.

mod commands;
mod config;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "pcmarg", version, about = "Learned parent-set marginalizers for Bayesian structure learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Experiment configuration (JSON). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run only this seed instead of the configured list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, overriding the configured one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the ground-truth graph, mechanisms and train/test data.
    Generate(Common),
    /// Train one circuit per node on the training data.
    Train(Common),
    /// Build and store exact DP tables for a DP backend.
    BuildDp {
        #[command(flatten)]
        common: Common,
        /// `dp_full` or `dp_restricted(k)`.
        #[arg(long, default_value = "dp_full")]
        backend: String,
    },
    /// Print the log-mass of a pattern over {0,1,m}.
    Query {
        /// A serialized circuit, or a table sidecar (`.json`) next to its `.bin`.
        file: PathBuf,
        pattern: String,
    },
    /// Sample posteriors with each backend and write metrics.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Evaluate only this backend.
        #[arg(long)]
        backend: Option<String>,
    },
    /// Summarize metrics across seeds.
    Report(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(c) => commands::generate(&c),
        Command::Train(c) => commands::train(&c),
        Command::BuildDp { common, backend } => commands::build_dp(&common, &backend),
        Command::Query { file, pattern } => commands::query(&file, &pattern),
        Command::Eval { common, backend } => commands::eval(&common, backend.as_deref()),
        Command::Report(c) => commands::report(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
