//! Solver library for exact synchronization of coupled parabolic systems.
//!
//! The systems treated here are n-component reaction–diffusion equations on a
//! 1-D interval with homogeneous Dirichlet boundary conditions,
//!
//! ```text
//! y_t − y_xx + A y = χ_ω B u      on (0, L) × (0, T),
//! ```
//!
//! where `A` couples the components, `B` maps m control inputs into the state,
//! and `χ_ω` restricts the control to an interior region ω. *Exact
//! synchronization* at time `T` means all components agree from `T` onward:
//! `y_1(T) = y_2(T) = … = y_n(T)` pointwise, which is equivalent to `D y(T) = 0`
//! for the pairwise difference matrix `D`.
//!
//! The crate provides, in dependency order:
//!
//! * [`sync_algebra`] — the finite-dimensional structure: `D`, the reduced
//!   coupling matrix, row-sum and Kalman-rank tests, and the classification of
//!   a pair `(A, B)` as synchronizable through the reduced system (`H1`),
//!   through full controllability (`H2`), or not at all.
//! * [`pde`] — grids, state fields, and a Crank–Nicolson stepper whose
//!   backward-in-time dual solve is the exact transpose of the forward step,
//!   so that discrete duality identities hold to rounding error.
//! * [`min_norm`] — the minimal-norm control for a fixed horizon via a
//!   conjugate-gradient solve of the Gramian equation (optionally
//!   Tikhonov-shifted), plus the norm-vs-horizon curve `N(T)`.
//! * [`min_time`] — the minimal time to synchronize under a norm budget `M`,
//!   obtained by monotone bisection on `N(T) = M`, with existence gating and
//!   a posteriori verification of any claimed solution.
//!
//! All solver paths are deterministic: no randomness, and parallelism (the
//! optional `parallel` feature, on by default) only distributes *independent*
//! solves across threads, never a floating-point reduction.

pub mod error;
pub mod exec;
pub mod min_norm;
pub mod min_time;
pub mod pde;
pub mod sync_algebra;

pub use error::CoreError;
pub use min_norm::{
    eval_dual_functional, free_drift_final, grad_dual_functional, gramian_apply, norm_curve,
    norm_curve_seq, solve_min_norm, BranchProblem, HumOptions, MinNormResult, NormCurvePoint,
};
pub use min_time::{
    estimate_limit_norm, solve_min_time, verify_min_norm, verify_min_time, LimitEstimate,
    MinTimeResult, MinTimeStatus, TimeOptions, VerificationReport,
};
pub use pde::{
    adjoint_solve, build_grid, build_time_grid, field_inner, forward_solve, observe, omega_mask,
    AdjointSweep, ControlSignal, OmegaMask, SpatialGrid, StateField, StepOperator, TimeGrid,
    Trajectory,
};
pub use sync_algebra::{
    classify, difference_matrix, kalman_rank, reduced_matrix, row_condition, CouplingPair,
    Hypothesis, SyncStructure,
};
