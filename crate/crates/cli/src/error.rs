//! CLI error type and its mapping to process exit codes.

use syncctl_core::CoreError;
use thiserror::Error;

/// Everything that can abort a `syncctl` run.
#[derive(Debug, Error)]
pub enum CliError {
    /// Configuration problems: parse failures, schema violations, missing or
    /// out-of-range fields.
    #[error("config: {0}")]
    Config(String),

    /// File-system failures, with the offending path.
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    /// Failures surfaced by the solver library.
    #[error(transparent)]
    Solver(#[from] CoreError),
}

/// Exit code for a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit code for usage and configuration errors.
pub const EXIT_CONFIG: i32 = 1;
/// Exit code when the coupled system is not exactly synchronizable.
pub const EXIT_NOT_SYNCHRONIZABLE: i32 = 2;
/// Exit code for numerical-solver failures.
pub const EXIT_SOLVER: i32 = 3;

impl CliError {
    /// The process exit code this error maps to.
    ///
    /// Structural/argument errors are the user's configuration speaking, so
    /// they share the config exit code; only genuinely numerical failures
    /// (non-convergence, bracketing, singular blocks, non-finite values) take
    /// the solver exit code.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => EXIT_CONFIG,
            CliError::Solver(e) => match e {
                CoreError::NotSynchronizable => EXIT_NOT_SYNCHRONIZABLE,
                CoreError::InvalidArgument(_)
                | CoreError::InvalidDimension(_)
                | CoreError::RowConditionViolated { .. }
                | CoreError::EmptyControlRegion(_) => EXIT_CONFIG,
                CoreError::NonFinite(_)
                | CoreError::LinearSolveFailure { .. }
                | CoreError::NotConverged(_)
                | CoreError::BracketFailure { .. } => EXIT_SOLVER,
            },
        }
    }
}
