//! Command-line surface: trace scoring, simulation, the comparison driver,
//! and the budget-matched verification check.
//!
//! Exit codes: 0 success, 2 input error, 3 configuration or oracle error,
//! 4 theorem violation.

pub mod commands;
pub mod config;
pub mod trace;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::sim::Method;

pub use commands::{run, CliError};
pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "scpo",
    version,
    about = "Step-level length control: score traces, run the toy trainer, verify the budget-matched contribution bound"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Scpo,
    Global,
    None,
}

impl From<MethodArg> for Method {
    fn from(value: MethodArg) -> Self {
        match value {
            MethodArg::Scpo => Method::Scpo,
            MethodArg::Global => Method::Global,
            MethodArg::None => Method::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FixtureArg {
    /// Constant contribution density: the equality case, gap 0.
    UniformV,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Annotate a JSONL trace file with importance scores, rewards, and
    /// advantages.
    Score {
        /// Input trace file (JSONL).
        traces: PathBuf,
        /// Run configuration (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file for annotated JSONL.
        #[arg(long)]
        out: PathBuf,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the toy policy and emit per-iteration metrics.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Update rule.
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Output directory (falls back to the config's io.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Verify the budget-matched contribution inequality on random
    /// instances.
    TheoryCheck {
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Smallest instance size.
        #[arg(long, default_value_t = 2)]
        min_steps: usize,
        /// Largest instance size.
        #[arg(long, default_value_t = 50)]
        max_steps: usize,
        /// Replace random sampling with a constructed fixture.
        #[arg(long, value_enum)]
        fixture: Option<FixtureArg>,
        /// Also write the report record to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the step-level and global arms on shared seeds and summarize the
    /// differences.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Debug: force both arms onto one method (the summary deltas then
        /// vanish).
        #[arg(long, value_enum)]
        debug_force_method: Option<MethodArg>,
    },
}
