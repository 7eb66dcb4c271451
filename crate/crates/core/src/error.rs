//! Error types shared across the solver.

use thiserror::Error;

/// Errors produced by classification, discretization, and the optimization
/// drivers.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A matrix, vector, or grid parameter has a size that does not fit the
    /// operation.
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An argument was outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The coupling matrix does not have (approximately) equal row sums, so
    /// the reduced coupling matrix does not exist.
    #[error(
        "row-sum condition violated: row sums spread {spread:.3e} exceeds tolerance {tol:.3e}"
    )]
    RowConditionViolated { spread: f64, tol: f64 },

    /// The control region contains no interior grid nodes.
    #[error("control region {0} contains no interior grid nodes")]
    EmptyControlRegion(String),

    /// A block solve inside the time stepper hit a singular diagonal block.
    #[error("linear solve failed at spatial block {block}: {reason}")]
    LinearSolveFailure { block: usize, reason: String },

    /// The coupling pair satisfies neither synchronizability hypothesis, so no
    /// synchronizing control exists for generic initial data.
    #[error("system is not exactly synchronizable (classification: Neither)")]
    NotSynchronizable,

    /// An iterative solve stopped before reaching its tolerance.
    #[error("solver did not converge: {0}")]
    NotConverged(String),

    /// Min-time bisection could not bracket the requested norm level.
    #[error(
        "could not bracket norm level {target:.6e}: {reason} (best achieved N = {achieved:.6e})"
    )]
    BracketFailure {
        target: f64,
        achieved: f64,
        reason: String,
    },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, CoreError>;
