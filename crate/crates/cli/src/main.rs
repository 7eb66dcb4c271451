//! `syncctl` — command-line driver for the synchronization-control solver.
//!
//! Five subcommands over one JSON config:
//! * `classify`   — structural synchronizability check of the coupling pair;
//! * `simulate`   — free evolution of the coupled system;
//! * `min-norm`   — minimal-norm control for a fixed horizon;
//! * `norm-curve` — the minimal norm sampled over a set of horizons;
//! * `min-time`   — minimal horizon under a control-norm budget.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 system not
//! exactly synchronizable, 3 numerical-solver failure.

mod commands;
mod config;
mod error;
mod output;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Workspace;
use crate::error::{CliError, EXIT_CONFIG};

#[derive(Parser)]
#[command(
    name = "syncctl",
    version,
    about = "Minimal-norm and minimal-time synchronizing controls for coupled parabolic systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the coupling pair (synchronizability hypotheses H1/H2).
    Classify(CommonArgs),
    /// Simulate the free (uncontrolled) evolution.
    Simulate(CommonArgs),
    /// Compute the minimal-norm synchronizing control for the configured horizon.
    MinNorm(CommonArgs),
    /// Sample the minimal control norm over the configured horizons.
    NormCurve(CommonArgs),
    /// Find the minimal synchronization time under the configured norm budget.
    MinTime(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON problem configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `outputs.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Cap worker threads from the `SYNCCTL_THREADS` environment variable.
fn apply_thread_cap() -> Result<(), CliError> {
    match std::env::var("SYNCCTL_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let n: usize = raw.parse().map_err(|_| {
                CliError::Config(format!(
                    "SYNCCTL_THREADS: expected a positive integer, got \"{raw}\""
                ))
            })?;
            if n == 0 {
                return Err(CliError::Config(
                    "SYNCCTL_THREADS: expected a positive integer, got \"0\"".to_string(),
                ));
            }
            syncctl_core::exec::configure_threads(n)
                .map_err(|e| CliError::Config(format!("SYNCCTL_THREADS: {e}")))
        }
    }
}

type Runner = fn(&mut Workspace) -> Result<i32, CliError>;

fn run(command: Command) -> Result<i32, CliError> {
    apply_thread_cap()?;
    let (args, runner): (&CommonArgs, Runner) = match &command {
        Command::Classify(a) => (a, commands::classify_cmd),
        Command::Simulate(a) => (a, commands::simulate_cmd),
        Command::MinNorm(a) => (a, commands::min_norm_cmd),
        Command::NormCurve(a) => (a, commands::norm_curve_cmd),
        Command::MinTime(a) => (a, commands::min_time_cmd),
    };
    let loaded = config::load(&args.config)?;
    let mut ws = Workspace::new(loaded, args.out.as_deref())?;
    runner(&mut ws)
}

fn main() -> ExitCode {
    // Clap's default exit code for usage errors is 2, which this tool
    // reserves for "not synchronizable"; route usage errors to 1 instead.
    // Help and version requests still exit 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            debug_assert_ne!(code, 0);
            ExitCode::from(code.max(EXIT_CONFIG) as u8)
        }
    }
}
