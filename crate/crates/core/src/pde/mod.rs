//! Spatial/temporal discretization and the forward/adjoint PDE solvers.
//!
//! The continuous model is a system of `k` coupled one-dimensional parabolic
//! equations on an interval with homogeneous Dirichlet boundary conditions,
//!
//! ```text
//! y_t − y_xx + A y = χ_ω B u   on (0, L) × (0, T),
//! ```
//!
//! where `A` couples the components, `B` maps `m` control channels into the
//! components, and `χ_ω` restricts the forcing to a union of open
//! subintervals. This module discretizes the model with second-order central
//! differences in space and the trapezoidal (Crank–Nicolson) rule in time,
//! and exposes:
//!
//! - [`SpatialGrid`], [`TimeGrid`], [`OmegaMask`]: the discrete geometry;
//! - [`StateField`], [`Trajectory`], [`ControlSignal`]: the discrete unknowns
//!   with their weighted L² norms and pairings;
//! - [`forward_solve`], [`adjoint_solve`], [`observe`]: the primal march, the
//!   dual march, and the observation of a dual sweep on the control region;
//! - [`StepOperator`]: the factored one-step operator, for callers that need
//!   to amortize the factorization over many solves.
//!
//! The load-bearing property of the discretization is exact discrete duality:
//! the dual march is the elementwise transpose of the primal march, so the
//! pairing identity relating terminal states, initial states, and observed
//! controls holds to rounding. See [`solve`] for the precise statement.

mod field;
mod grid;
mod solve;
mod stepper;

pub use field::{field_inner, ControlSignal, StateField, Trajectory};
pub use grid::{build_grid, build_time_grid, omega_mask, OmegaMask, SpatialGrid, TimeGrid};
pub use solve::{
    adjoint_solve, adjoint_with_operator, forward_final_with_operator, forward_solve,
    forward_with_operator, observe, AdjointSweep,
};
pub use stepper::StepOperator;
