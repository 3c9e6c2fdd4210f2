//! `onepflow run|steady|sweep|diagnose --config <path> --out <dir> [--seed k]`
//!
//! Exit status: 0 on success, 2 when a diagnostic check fails, 1 on any
//! other error.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] onepflow_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("assertion failed: {0}")]
    Assertion(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Assertion(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "onepflow",
    version,
    about = "Regularized (1,p)-Laplace flow solver and diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Eps,
    Delta,
}

#[derive(Subcommand)]
enum Command {
    /// Time-step the scenario to `t_end`.
    Run(Common),
    /// Step until the field is stationary.
    Steady(Common),
    /// ε-convergence study or δ-truncation sweep.
    Sweep {
        kind: SweepKind,
        #[command(flatten)]
        common: Common,
    },
    /// Run and evaluate the diagnostics plan.
    Diagnose(Common),
}

fn execute(command: &Command) -> Result<(), CliError> {
    let (common, f): (
        &Common,
        fn(&config::Experiment, &Path) -> Result<(), CliError>,
    ) = match command {
        Command::Run(c) => (c, commands::cmd_run),
        Command::Steady(c) => (c, commands::cmd_steady),
        Command::Sweep {
            kind: SweepKind::Eps,
            common,
        } => (common, commands::cmd_sweep_eps),
        Command::Sweep {
            kind: SweepKind::Delta,
            common,
        } => (common, commands::cmd_sweep_delta),
        Command::Diagnose(c) => (c, commands::cmd_diagnose),
    };
    let ex = config::parse_config(&common.config, common.seed)?;
    std::fs::create_dir_all(&common.out)?;
    f(&ex, &common.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("onepflow: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
