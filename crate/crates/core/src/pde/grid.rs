//! Spatial grid, time grid, and the control-region mask.

use crate::error::{CoreError, Result};

/// Uniform grid of interior nodes on the interval (0, L) with homogeneous
/// Dirichlet boundary conditions (the endpoints carry no unknowns).
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    /// Domain length L.
    pub length: f64,
    /// Number of interior nodes.
    pub nx: usize,
    /// Node spacing, `length / (nx + 1)`.
    pub dx: f64,
}

impl SpatialGrid {
    /// Coordinate of interior node `i` (0-based): `x = (i+1)·dx`.
    pub fn node(&self, i: usize) -> f64 {
        (i as f64 + 1.0) * self.dx
    }
}

/// Build a spatial grid with `nx ≥ 3` interior nodes on (0, `length`).
pub fn build_grid(length: f64, nx: usize) -> Result<SpatialGrid> {
    if length <= 0.0 || !length.is_finite() {
        return Err(CoreError::InvalidArgument(format!(
            "domain length must be positive and finite, got {length}"
        )));
    }
    if nx < 3 {
        return Err(CoreError::InvalidDimension(format!(
            "need at least 3 interior nodes, got {nx}"
        )));
    }
    Ok(SpatialGrid {
        length,
        nx,
        dx: length / (nx as f64 + 1.0),
    })
}

/// Uniform partition of [0, T] into `nt` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    /// Horizon T.
    pub horizon: f64,
    /// Number of steps.
    pub nt: usize,
    /// Step size, `horizon / nt`.
    pub dt: f64,
}

impl TimeGrid {
    /// Knot `t_j = j·dt`, `j = 0..=nt`.
    pub fn knot(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }
}

/// Build a time grid with `nt ≥ 1` steps on [0, `horizon`].
pub fn build_time_grid(horizon: f64, nt: usize) -> Result<TimeGrid> {
    if horizon <= 0.0 || !horizon.is_finite() {
        return Err(CoreError::InvalidArgument(format!(
            "time horizon must be positive and finite, got {horizon}"
        )));
    }
    if nt < 1 {
        return Err(CoreError::InvalidDimension(
            "need at least one time step".into(),
        ));
    }
    Ok(TimeGrid {
        horizon,
        nt,
        dt: horizon / nt as f64,
    })
}

/// Indicator of the control region ω (a union of open subintervals) sampled on
/// the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaMask {
    /// The defining intervals (a, b) ⊂ (0, L).
    pub intervals: Vec<(f64, f64)>,
    /// Per-node weight: exactly 1.0 on nodes strictly inside some interval,
    /// exactly 0.0 elsewhere.
    pub weights: Vec<f64>,
}

impl OmegaMask {
    /// Number of nodes inside ω.
    pub fn active_nodes(&self) -> usize {
        self.weights.iter().filter(|&&w| w == 1.0).count()
    }
}

/// Sample the control region on the grid. Every interval must satisfy
/// `0 ≤ a < b ≤ L`, and at least one node must fall inside ω.
pub fn omega_mask(grid: &SpatialGrid, intervals: &[(f64, f64)]) -> Result<OmegaMask> {
    if intervals.is_empty() {
        return Err(CoreError::EmptyControlRegion("[]".into()));
    }
    for &(a, b) in intervals {
        if !(a.is_finite() && b.is_finite()) || a < 0.0 || b > grid.length || a >= b {
            return Err(CoreError::InvalidArgument(format!(
                "control interval ({a}, {b}) is not inside (0, {})",
                grid.length
            )));
        }
    }
    let weights: Vec<f64> = (0..grid.nx)
        .map(|i| {
            let x = grid.node(i);
            if intervals.iter().any(|&(a, b)| a < x && x < b) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        return Err(CoreError::EmptyControlRegion(format!("{intervals:?}")));
    }
    Ok(OmegaMask {
        intervals: intervals.to_vec(),
        weights,
    })
}
