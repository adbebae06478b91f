//! The `smn` command line: prepare, train, predict, evaluate, analyze,
//! ablate and gradcheck, each driven by one JSON run configuration.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use smn_core::Error;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "smn", version, about = "Statement memory network code summarizer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Detach the |F - M| gate feature from the gradient tape.
    DetachGate,
}

#[derive(Clone, Debug, Args)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model checkpoint; repeat to ensemble.
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    /// Main output path of the subcommand.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-hop gate values next to the predictions.
    #[arg(long)]
    pub dump_gates: bool,
    #[arg(long, hide = true)]
    pub inject_fault: Option<Fault>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a dataset by project and build vocabularies.
    Prepare(Common),
    /// Train one model and write its checkpoint and log.
    Train(Common),
    /// Greedy-decode summaries with one model or an ensemble.
    Predict(Common),
    /// Score a prediction file.
    Evaluate(Common),
    /// Compare two prediction files.
    Analyze(Common),
    /// Train and compare a sweep of model variants.
    Ablate(Common),
    /// Finite-difference gradient verification.
    Gradcheck(Common),
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Usage(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_VERIFY,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
