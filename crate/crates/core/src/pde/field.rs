//! State fields, trajectories, and control signals with their discrete norms.
//!
//! All spatial inner products carry the quadrature weight `dx`, and control
//! norms additionally carry `dt`, so that every discrete quantity approximates
//! its L² counterpart and the duality identities close exactly.

use nalgebra::DMatrix;

use super::grid::{OmegaMask, TimeGrid};
use crate::error::{CoreError, Result};

/// A k-component spatial profile sampled on the interior nodes: row `c` holds
/// component `c`, column `i` holds node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    /// k×nx component-by-node values.
    pub values: DMatrix<f64>,
}

impl StateField {
    /// Zero field with `k` components on `nx` nodes.
    pub fn zeros(k: usize, nx: usize) -> Self {
        Self {
            values: DMatrix::zeros(k, nx),
        }
    }

    /// Build from a per-entry function of (component, node).
    pub fn from_fn(k: usize, nx: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            values: DMatrix::from_fn(k, nx, f),
        }
    }

    /// Number of components.
    pub fn k(&self) -> usize {
        self.values.nrows()
    }

    /// Number of spatial nodes.
    pub fn nx(&self) -> usize {
        self.values.ncols()
    }

    /// Discrete L² norm with quadrature weight `dx`.
    pub fn norm(&self, dx: f64) -> f64 {
        (dx.sqrt()) * self.values.norm()
    }

    /// Largest absolute entry.
    pub fn amax(&self) -> f64 {
        self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// True if every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Discrete L² inner product `dx·Σ a_i b_i` of two equally shaped fields.
pub fn field_inner(a: &StateField, b: &StateField, dx: f64) -> f64 {
    debug_assert_eq!(a.values.shape(), b.values.shape());
    dx * a.values.dot(&b.values)
}

/// Snapshots of a k-component field at every knot of a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// The partition of [0, T] the snapshots live on.
    pub timegrid: TimeGrid,
    /// `nt + 1` snapshots, index `j` at time `t_j`.
    pub snapshots: Vec<StateField>,
}

impl Trajectory {
    /// Snapshot at knot `j`.
    pub fn at(&self, j: usize) -> &StateField {
        &self.snapshots[j]
    }

    /// Final snapshot (time T).
    pub fn final_state(&self) -> &StateField {
        self.snapshots
            .last()
            .expect("trajectory has nt+1 >= 2 snapshots")
    }
}

/// A piecewise-constant-in-time control: `values[j]` (an m×nx matrix) acts on
/// the step from `t_j` to `t_{j+1}`, and the signal is zero outside ω and
/// after the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    /// The partition of [0, T] the slots live on.
    pub timegrid: TimeGrid,
    /// `nt` slot values, each m×nx.
    pub values: Vec<DMatrix<f64>>,
    /// The control region the signal is supported on.
    pub support_mask: OmegaMask,
}

impl ControlSignal {
    /// All-zero signal with `m` control components.
    pub fn zeros(timegrid: TimeGrid, m: usize, mask: OmegaMask) -> Self {
        let nx = mask.weights.len();
        let values = vec![DMatrix::zeros(m, nx); timegrid.nt];
        Self {
            timegrid,
            values,
            support_mask: mask,
        }
    }

    /// Number of control components.
    pub fn m(&self) -> usize {
        self.values.first().map_or(0, |v| v.nrows())
    }

    /// Discrete space–time L² norm: `(Σ_j dt · Σ_{c,i} dx · v²)^{1/2}`.
    pub fn norm(&self, dx: f64) -> f64 {
        let sumsq: f64 = self.values.iter().map(|v| v.norm_squared()).sum();
        (self.timegrid.dt * dx * sumsq).sqrt()
    }

    /// Discrete space–time inner product against another signal on the same
    /// grid and shape.
    pub fn inner(&self, other: &ControlSignal, dx: f64) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.dot(b))
            .sum();
        self.timegrid.dt * dx * s
    }

    /// Check the support invariant: every value at a node outside ω is exactly
    /// zero.
    pub fn respects_mask(&self) -> bool {
        self.values.iter().all(|v| {
            (0..v.ncols()).all(|i| {
                self.support_mask.weights[i] == 1.0 || v.column(i).iter().all(|&x| x == 0.0)
            })
        })
    }

    /// Validate finiteness and the support invariant.
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.timegrid.nt {
            return Err(CoreError::InvalidDimension(format!(
                "control has {} slots for {} steps",
                self.values.len(),
                self.timegrid.nt
            )));
        }
        if self.values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(CoreError::NonFinite("control signal".into()));
        }
        if !self.respects_mask() {
            return Err(CoreError::InvalidArgument(
                "control signal has support outside the control region".into(),
            ));
        }
        Ok(())
    }
}
