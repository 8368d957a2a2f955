//! `rslicer` command line: one subcommand per pipeline stage.
//!
//! Every stage reads and writes files only, so stages can be rerun or
//! swapped independently. Failures print a single line
//! `error: <code>: <message>` on stderr and exit with status 1.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rslicer", version, about = "State-aware multimodal telemetry pipeline")]
pub struct Cli {
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Ad,
    Loc,
    Cls,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scenario into a directory.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Window raw telemetry files into a corpus.
    Ingest {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        logs: PathBuf,
        /// Fault-interval label file.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Regime schedule file (synthetic runs only).
        #[arg(long)]
        regimes: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embed every window of a corpus with the configured backbone.
    Embed {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the fusion network.
    Train {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fuse every window into a system-state embedding.
    Fuse {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster states into latent runtime states.
    Partition {
        #[arg(long)]
        states: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit state-conditioned task models on the training windows.
    Tune {
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long)]
        states: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score held-out windows against fault labels.
    Eval {
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        states: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Fault-interval label file.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Project states to 2-D for plotting.
    Project {
        #[arg(long)]
        states: PathBuf,
        /// Partition for the `cluster` column; without it the states are
        /// partitioned with the run config.
        #[arg(long)]
        partition: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.code, one_line(&e.message));
            ExitCode::FAILURE
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
