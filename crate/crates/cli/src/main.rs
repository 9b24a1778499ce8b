//! `curvlab <mode> --config <file> --out <dir> [--seed N] [--quiet]`
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 solver
//! nonconvergence, 3 invariant violation or campaign hard failure.

mod config;
mod manifest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::config::Mode;

#[derive(Debug, Parser)]
#[command(name = "curvlab", version, about = "Prescribed-curvature solvers and inequality campaigns")]
struct Cli {
    mode: Mode,
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// No progress messages on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    NonConvergence(String),
    #[error("{0}")]
    HardFailure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::NonConvergence(_) => 2,
            CliError::HardFailure(_) => 3,
        }
    }
}

impl From<curvlab::Error> for CliError {
    fn from(e: curvlab::Error) -> Self {
        use curvlab::Error as E;
        match e {
            E::NonConvergence { .. } | E::ContinuationFailure { .. } | E::SingularJacobian(_) | E::Start(_) => {
                CliError::NonConvergence(e.to_string())
            }
            E::ConeViolation { .. } | E::NotStarshaped { .. } | E::Geometry { .. } | E::NonFinite(_) => {
                CliError::HardFailure(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("I/O error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let opts = run::Options { out: cli.out, seed: cli.seed, quiet: cli.quiet };
    match run::execute(cli.mode, &cli.config, &opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("curvlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
