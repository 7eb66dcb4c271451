//! Forward and adjoint trajectory drivers.
//!
//! [`forward_solve`] marches the coupled parabolic system
//! `y_t − y_xx + A y = χ_ω B u` forward from an initial field, optionally
//! forced by a [`ControlSignal`]; [`adjoint_solve`] marches the dual system
//! backward from terminal data, and [`observe`] extracts the control-space
//! observation of a dual trajectory on the control region.
//!
//! The three operations are tied together by a discrete duality identity that
//! holds to rounding, not just to discretization error:
//!
//! ```text
//! ⟨ψ(T), y(T)⟩ = ⟨ψ(0), y(0)⟩ + ⟨observe(ψ), u⟩
//! ```
//!
//! for every control `u` and terminal datum `ψ(T)`, where the inner products
//! are the weighted discrete L² pairings of [`field_inner`] and
//! [`ControlSignal::inner`]. The identity is what downstream solvers rely on
//! to make the controllability Gramian exactly symmetric, and it pins down
//! the quadrature: the observation at step `j` samples the dual variable at
//! the implicit half of the step, `η_{j+1} = E⁻ᵀ ψ_{j+1}`, not at a knot.
//!
//! [`field_inner`]: super::field::field_inner

use nalgebra::DMatrix;

use super::field::{ControlSignal, StateField, Trajectory};
use super::grid::{OmegaMask, SpatialGrid, TimeGrid};
use super::stepper::StepOperator;
use crate::error::{CoreError, Result};

/// A backward dual trajectory together with the per-step quadrature samples
/// needed to observe it consistently with the forward march.
#[derive(Debug, Clone)]
pub struct AdjointSweep {
    /// Dual states `ψ_j` at the time knots, ordered forward in time
    /// (`trajectory.at(nt)` is the terminal datum the sweep started from).
    pub trajectory: Trajectory,
    /// Quadrature samples `η_{j+1} = E⁻ᵀ ψ_{j+1}`, one per step,
    /// `quadrature[j]` belonging to the step from knot `j` to knot `j+1`.
    pub quadrature: Vec<StateField>,
}

fn check_state(op: &StepOperator, f: &StateField, name: &str) -> Result<()> {
    if f.k() != op.k || f.nx() != op.nx {
        return Err(CoreError::InvalidDimension(format!(
            "{name} is {}x{}, operator expects {}x{}",
            f.k(),
            f.nx(),
            op.k,
            op.nx
        )));
    }
    if !f.is_finite() {
        return Err(CoreError::NonFinite(format!(
            "{name} contains a non-finite entry"
        )));
    }
    Ok(())
}

fn check_input_matrix(op: &StepOperator, b_sys: &DMatrix<f64>) -> Result<()> {
    if b_sys.nrows() != op.k || b_sys.ncols() == 0 {
        return Err(CoreError::InvalidDimension(format!(
            "input matrix is {}x{}, expected {} rows and at least one column",
            b_sys.nrows(),
            b_sys.ncols(),
            op.k
        )));
    }
    if b_sys.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite(
            "input matrix contains a non-finite entry".into(),
        ));
    }
    Ok(())
}

fn check_control(op: &StepOperator, b_sys: &DMatrix<f64>, control: &ControlSignal) -> Result<()> {
    if control.timegrid != op.timegrid {
        return Err(CoreError::InvalidArgument(
            "control signal lives on a different time grid than the solver".into(),
        ));
    }
    if control.support_mask.weights.len() != op.nx {
        return Err(CoreError::InvalidDimension(format!(
            "control mask covers {} nodes, grid has {}",
            control.support_mask.weights.len(),
            op.nx
        )));
    }
    for (j, v) in control.values.iter().enumerate() {
        if v.nrows() != b_sys.ncols() || v.ncols() != op.nx {
            return Err(CoreError::InvalidDimension(format!(
                "control slot {j} is {}x{}, expected {}x{}",
                v.nrows(),
                v.ncols(),
                b_sys.ncols(),
                op.nx
            )));
        }
    }
    control.validate()
}

/// March forward with a prebuilt operator, returning either the full list of
/// snapshots or only the final state.
fn run_forward(
    op: &StepOperator,
    b_sys: &DMatrix<f64>,
    y0: &StateField,
    control: Option<&ControlSignal>,
    keep_snapshots: bool,
) -> Result<(Option<Vec<StateField>>, StateField)> {
    check_input_matrix(op, b_sys)?;
    check_state(op, y0, "initial state")?;
    if let Some(ctl) = control {
        check_control(op, b_sys, ctl)?;
    }

    let nt = op.timegrid.nt;
    let dt = op.timegrid.dt;
    let mut cur = y0.values.clone();
    let mut snaps = if keep_snapshots {
        let mut v = Vec::with_capacity(nt + 1);
        v.push(StateField {
            values: cur.clone(),
        });
        Some(v)
    } else {
        None
    };
    let mut rhs = DMatrix::<f64>::zeros(op.k, op.nx);
    let mut forcing = control.map(|_| DMatrix::<f64>::zeros(op.k, op.nx));
    for j in 0..nt {
        op.apply_f(&cur, &mut rhs);
        if let (Some(ctl), Some(fbuf)) = (control, forcing.as_mut()) {
            // Control slots are exactly zero off the mask, so B·v_j already
            // is as well; no separate masking pass is needed here.
            fbuf.gemm(1.0, b_sys, &ctl.values[j], 0.0);
            rhs.zip_apply(fbuf, |r, f| *r += dt * f);
        }
        op.solve_in_place(&mut rhs);
        std::mem::swap(&mut cur, &mut rhs);
        if let Some(s) = snaps.as_mut() {
            s.push(StateField {
                values: cur.clone(),
            });
        }
    }
    Ok((snaps, StateField { values: cur }))
}

/// Forward march with a prebuilt operator, keeping every snapshot.
pub fn forward_with_operator(
    op: &StepOperator,
    b_sys: &DMatrix<f64>,
    y0: &StateField,
    control: Option<&ControlSignal>,
) -> Result<Trajectory> {
    let (snaps, _) = run_forward(op, b_sys, y0, control, true)?;
    Ok(Trajectory {
        timegrid: op.timegrid.clone(),
        snapshots: snaps.expect("snapshots requested"),
    })
}

/// Forward march with a prebuilt operator, returning only the final state.
/// This is the memory-friendly path used inside iterative solvers.
pub fn forward_final_with_operator(
    op: &StepOperator,
    b_sys: &DMatrix<f64>,
    y0: &StateField,
    control: Option<&ControlSignal>,
) -> Result<StateField> {
    let (_, last) = run_forward(op, b_sys, y0, control, false)?;
    Ok(last)
}

/// Backward dual march with a prebuilt operator.
///
/// The recursion is the exact transpose of the forward step:
/// `η_{j+1} = E⁻ᵀ ψ_{j+1}`, then `ψ_j = Fᵀ η_{j+1}`. Both the knot values and
/// the `η` samples are kept, because observations must be taken at the `η`
/// samples for the duality identity to hold exactly.
pub fn adjoint_with_operator(op: &StepOperator, psi_t: &StateField) -> Result<AdjointSweep> {
    check_state(op, psi_t, "terminal dual state")?;
    let nt = op.timegrid.nt;
    let mut knots_rev: Vec<StateField> = Vec::with_capacity(nt + 1);
    let mut quad_rev: Vec<StateField> = Vec::with_capacity(nt);
    let mut cur = psi_t.values.clone();
    knots_rev.push(StateField {
        values: cur.clone(),
    });
    let mut next = DMatrix::<f64>::zeros(op.k, op.nx);
    for _ in 0..nt {
        op.solve_transpose_in_place(&mut cur);
        quad_rev.push(StateField {
            values: cur.clone(),
        });
        op.apply_f_transpose(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        knots_rev.push(StateField {
            values: cur.clone(),
        });
    }
    knots_rev.reverse();
    quad_rev.reverse();
    Ok(AdjointSweep {
        trajectory: Trajectory {
            timegrid: op.timegrid.clone(),
            snapshots: knots_rev,
        },
        quadrature: quad_rev,
    })
}

/// Solve the coupled system forward in time.
///
/// `a_sys` is the k×k zero-order coupling matrix, `b_sys` the k×m control
/// input matrix. When `control` is `None` the system evolves freely. The
/// returned trajectory holds `nt + 1` snapshots including the initial one.
pub fn forward_solve(
    a_sys: &DMatrix<f64>,
    b_sys: &DMatrix<f64>,
    y0: &StateField,
    control: Option<&ControlSignal>,
    grid: &SpatialGrid,
    timegrid: &TimeGrid,
) -> Result<Trajectory> {
    let op = StepOperator::new(a_sys, grid, timegrid)?;
    forward_with_operator(&op, b_sys, y0, control)
}

/// Solve the dual system backward from terminal data `ψ(T)`.
///
/// `a_sys` is the *forward* coupling matrix; the transposition that turns it
/// into the dual coupling happens inside, so callers never hand-transpose.
pub fn adjoint_solve(
    a_sys: &DMatrix<f64>,
    psi_t: &StateField,
    grid: &SpatialGrid,
    timegrid: &TimeGrid,
) -> Result<AdjointSweep> {
    let op = StepOperator::new(a_sys, grid, timegrid)?;
    adjoint_with_operator(&op, psi_t)
}

/// Observe a dual sweep through the control operator on the control region:
/// slot `j` of the result is `χ_ω ⊙ (Bᵀ η_{j+1})`.
///
/// The observation respects the mask exactly (off-mask entries are exact
/// zeros) and lives on the sweep's time grid, so it can be fed straight back
/// into [`forward_solve`] as a control.
pub fn observe(
    sweep: &AdjointSweep,
    b_sys: &DMatrix<f64>,
    mask: &OmegaMask,
) -> Result<ControlSignal> {
    let nt = sweep.trajectory.timegrid.nt;
    if sweep.quadrature.len() != nt {
        return Err(CoreError::InvalidArgument(format!(
            "adjoint sweep carries {} quadrature samples for {} steps",
            sweep.quadrature.len(),
            nt
        )));
    }
    let first = sweep.quadrature.first().ok_or_else(|| {
        CoreError::InvalidArgument("adjoint sweep has no quadrature samples".into())
    })?;
    let k = first.k();
    let nx = first.nx();
    if b_sys.nrows() != k || b_sys.ncols() == 0 {
        return Err(CoreError::InvalidDimension(format!(
            "input matrix is {}x{}, expected {} rows and at least one column",
            b_sys.nrows(),
            b_sys.ncols(),
            k
        )));
    }
    if mask.weights.len() != nx {
        return Err(CoreError::InvalidDimension(format!(
            "mask covers {} nodes, fields have {}",
            mask.weights.len(),
            nx
        )));
    }
    let m = b_sys.ncols();
    let mut values = Vec::with_capacity(nt);
    let mut slot = DMatrix::<f64>::zeros(m, nx);
    for eta in &sweep.quadrature {
        slot.gemm_tr(1.0, b_sys, &eta.values, 0.0);
        for (i, w) in mask.weights.iter().enumerate() {
            if *w == 0.0 {
                slot.column_mut(i).fill(0.0);
            }
        }
        values.push(slot.clone());
    }
    Ok(ControlSignal {
        timegrid: sweep.trajectory.timegrid.clone(),
        values,
        support_mask: mask.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::field::field_inner;
    use crate::pde::grid::{build_grid, build_time_grid, omega_mask};
    use approx::assert_abs_diff_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 1, &[v])
    }

    fn sine_field(grid: &SpatialGrid, freq: f64) -> StateField {
        StateField::from_fn(1, grid.nx, |_, i| (freq * grid.node(i)).sin())
    }

    /// Discrete Dirichlet Laplacian eigenvalue for the mode sin(πx/L).
    fn discrete_mode_decay(grid: &SpatialGrid) -> f64 {
        let theta = std::f64::consts::PI / grid.length * grid.dx;
        2.0 * (1.0 - theta.cos()) / (grid.dx * grid.dx)
    }

    #[test]
    fn scalar_eigenfunction_decay_matches_heat_kernel() {
        // y_t − y_xx + a y = 0, y0 = sin(πx) on (0,1): y(T) = e^{−(π²+a)T} y0.
        let a = 0.7;
        let grid = build_grid(1.0, 80).unwrap();
        let tg = build_time_grid(0.4, 160).unwrap();
        let b = scalar(1.0);
        let y0 = sine_field(&grid, std::f64::consts::PI);
        let traj = forward_solve(&scalar(a), &b, &y0, None, &grid, &tg).unwrap();
        let decay = (-(std::f64::consts::PI.powi(2) + a) * tg.horizon).exp();
        let last = traj.final_state();
        for i in 0..grid.nx {
            let want = decay * y0.values[(0, i)];
            let err = (last.values[(0, i)] - want).abs();
            assert!(
                err <= 1e-3 * decay,
                "node {i}: got {} want {want}",
                last.values[(0, i)]
            );
        }
        assert_eq!(traj.snapshots.len(), tg.nt + 1);
    }

    #[test]
    fn eigenfunction_decay_on_longer_domain() {
        // Same law on (0,2) with the slower mode sin(πx/2).
        let a = 0.7;
        let grid = build_grid(2.0, 80).unwrap();
        let tg = build_time_grid(0.4, 160).unwrap();
        let y0 = sine_field(&grid, std::f64::consts::PI / 2.0);
        let traj = forward_solve(&scalar(a), &scalar(1.0), &y0, None, &grid, &tg).unwrap();
        let mu = (std::f64::consts::PI / 2.0).powi(2) + a;
        let decay = (-mu * tg.horizon).exp();
        for i in 0..grid.nx {
            let want = decay * y0.values[(0, i)];
            assert!(
                (traj.final_state().values[(0, i)] - want).abs() <= 5e-4 * decay,
                "node {i}"
            );
        }
    }

    #[test]
    fn coupled_eigenvector_mode_decays_componentwise() {
        // A = [[1,0],[0.5,0.5]] has eigenpair (0.5, (0,1)); the initial field
        // sin(πx)·(0,1) therefore decays like e^{−(π²+0.5)T} in both the PDE
        // and its discretization.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        let grid = build_grid(1.0, 80).unwrap();
        let tg = build_time_grid(0.4, 160).unwrap();
        let y0 = StateField::from_fn(2, grid.nx, |c, i| {
            if c == 1 {
                (std::f64::consts::PI * grid.node(i)).sin()
            } else {
                0.0
            }
        });
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let traj = forward_solve(&a, &b, &y0, None, &grid, &tg).unwrap();
        let decay = (-(std::f64::consts::PI.powi(2) + 0.5) * tg.horizon).exp();
        let last = traj.final_state();
        for i in 0..grid.nx {
            assert!(last.values[(0, i)].abs() <= 1e-3 * decay);
            let want = decay * y0.values[(1, i)];
            assert!((last.values[(1, i)] - want).abs() <= 1e-3 * decay);
        }
    }

    #[test]
    fn adjoint_eigenfunction_decay_matches_heat_kernel() {
        // The scalar dual system is the same heat law run backward, so the
        // sweep from ψ(T) = sin(πx) lands on e^{−(π²+a)T} sin(πx) at t = 0.
        let a = 0.7;
        let grid = build_grid(1.0, 80).unwrap();
        let tg = build_time_grid(0.4, 160).unwrap();
        let psi_t = sine_field(&grid, std::f64::consts::PI);
        let sweep = adjoint_solve(&scalar(a), &psi_t, &grid, &tg).unwrap();
        let decay = (-(std::f64::consts::PI.powi(2) + a) * tg.horizon).exp();
        let psi0 = sweep.trajectory.at(0);
        for i in 0..grid.nx {
            let want = decay * psi_t.values[(0, i)];
            assert!(
                (psi0.values[(0, i)] - want).abs() <= 1e-3 * decay,
                "node {i}"
            );
        }
        assert_eq!(sweep.trajectory.snapshots.len(), tg.nt + 1);
        assert_eq!(sweep.quadrature.len(), tg.nt);
    }

    #[test]
    fn duality_identity_holds_to_rounding() {
        // ⟨ψ(T), y(T)⟩ = ⟨ψ(0), y(0)⟩ + ⟨observe(ψ), u⟩ for random data.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -0.3, 0.4, 0.9]);
        let b = DMatrix::from_row_slice(2, 1, &[0.2, 1.0]);
        let grid = build_grid(1.0, 50).unwrap();
        let tg = build_time_grid(0.7, 80).unwrap();
        let mask = omega_mask(&grid, &[(0.3, 0.8)]).unwrap();

        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) * 2.0 - 1.0
        };

        for _ in 0..3 {
            let y0 = StateField::from_fn(2, grid.nx, |_, _| next());
            let psi_t = StateField::from_fn(2, grid.nx, |_, _| next());
            let mut control = ControlSignal::zeros(tg.clone(), 1, mask.clone());
            for slot in control.values.iter_mut() {
                for (i, w) in mask.weights.iter().enumerate() {
                    if *w != 0.0 {
                        slot[(0, i)] = next();
                    }
                }
            }

            let traj = forward_solve(&a, &b, &y0, Some(&control), &grid, &tg).unwrap();
            let sweep = adjoint_solve(&a, &psi_t, &grid, &tg).unwrap();
            let obs = observe(&sweep, &b, &mask).unwrap();

            let lhs = field_inner(&psi_t, traj.final_state(), grid.dx);
            let rhs =
                field_inner(sweep.trajectory.at(0), &y0, grid.dx) + obs.inner(&control, grid.dx);
            let scale = psi_t.norm(grid.dx) * traj.final_state().norm(grid.dx)
                + sweep.trajectory.at(0).norm(grid.dx) * y0.norm(grid.dx)
                + obs.norm(grid.dx) * control.norm(grid.dx);
            assert!(
                (lhs - rhs).abs() <= 1e-12 * scale.max(1e-300),
                "duality defect {:.3e} at scale {:.3e}",
                (lhs - rhs).abs(),
                scale
            );
        }
    }

    #[test]
    fn unforced_energy_never_grows_for_dissipative_coupling() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        let grid = build_grid(1.0, 40).unwrap();
        let tg = build_time_grid(1.0, 60).unwrap();
        let mut state = 0xD1B54A32D192ED03u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) * 2.0 - 1.0
        };
        let y0 = StateField::from_fn(2, grid.nx, |_, _| next());
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let traj = forward_solve(&a, &b, &y0, None, &grid, &tg).unwrap();
        let mut prev = traj.at(0).norm(grid.dx);
        for j in 1..=tg.nt {
            let cur = traj.at(j).norm(grid.dx);
            assert!(
                cur <= prev * (1.0 + 1e-12),
                "norm grew at step {j}: {prev} -> {cur}"
            );
            prev = cur;
        }
    }

    #[test]
    fn solution_is_linear_in_data_and_control() {
        // sol(y0, u) = sol(y0, 0) + sol(0, u) to rounding.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let grid = build_grid(1.0, 30).unwrap();
        let tg = build_time_grid(0.5, 40).unwrap();
        let mask = omega_mask(&grid, &[(0.2, 0.6)]).unwrap();
        let y0 = StateField::from_fn(2, grid.nx, |c, i| ((i + c) as f64 * 0.3).sin());
        let mut control = ControlSignal::zeros(tg.clone(), 1, mask.clone());
        for (j, slot) in control.values.iter_mut().enumerate() {
            for (i, w) in mask.weights.iter().enumerate() {
                if *w != 0.0 {
                    slot[(0, i)] = ((j * 7 + i) as f64 * 0.17).cos();
                }
            }
        }
        let zero = StateField::zeros(2, grid.nx);
        let full = forward_solve(&a, &b, &y0, Some(&control), &grid, &tg).unwrap();
        let drift = forward_solve(&a, &b, &y0, None, &grid, &tg).unwrap();
        let driven = forward_solve(&a, &b, &zero, Some(&control), &grid, &tg).unwrap();
        let scale = full.final_state().amax().max(1.0);
        for j in 0..=tg.nt {
            for ((f, d), g) in full
                .at(j)
                .values
                .iter()
                .zip(drift.at(j).values.iter())
                .zip(driven.at(j).values.iter())
            {
                assert_abs_diff_eq!(*f, d + g, epsilon = 1e-12 * scale);
            }
        }
    }

    #[test]
    fn difference_of_full_trajectory_follows_reduced_system() {
        // With equal row sums, D A = Ã D carries over to the discretization:
        // D y(t) computed from the full march equals the reduced march of
        // D y0 to rounding.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        let a_red = DMatrix::from_row_slice(1, 1, &[0.5]);
        let grid = build_grid(1.0, 40).unwrap();
        let tg = build_time_grid(0.6, 50).unwrap();
        let y0 = StateField::from_fn(2, grid.nx, |c, i| {
            let x = grid.node(i);
            if c == 0 {
                (std::f64::consts::PI * x).sin()
            } else {
                (2.0 * std::f64::consts::PI * x).sin()
            }
        });
        let full = forward_solve(
            &a,
            &DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            &y0,
            None,
            &grid,
            &tg,
        )
        .unwrap();
        let dy0 = StateField::from_fn(1, grid.nx, |_, i| y0.values[(0, i)] - y0.values[(1, i)]);
        let reduced = forward_solve(&a_red, &scalar(1.0), &dy0, None, &grid, &tg).unwrap();
        let scale = dy0.amax().max(1.0);
        for j in 0..=tg.nt {
            for i in 0..grid.nx {
                let d_full = full.at(j).values[(0, i)] - full.at(j).values[(1, i)];
                assert_abs_diff_eq!(
                    d_full,
                    reduced.at(j).values[(0, i)],
                    epsilon = 1e-11 * scale
                );
            }
        }
    }

    #[test]
    fn synchronized_initial_data_stays_synchronized() {
        // Equal components plus equal row sums keep the difference at zero.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        let grid = build_grid(1.0, 40).unwrap();
        let tg = build_time_grid(1.0, 100).unwrap();
        let y0 = StateField::from_fn(2, grid.nx, |_, i| {
            (std::f64::consts::PI * grid.node(i)).sin()
        });
        let traj = forward_solve(
            &a,
            &DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            &y0,
            None,
            &grid,
            &tg,
        )
        .unwrap();
        let scale = y0.norm(grid.dx);
        for j in 0..=tg.nt {
            let mut diff = 0.0f64;
            for i in 0..grid.nx {
                diff = diff.max((traj.at(j).values[(0, i)] - traj.at(j).values[(1, i)]).abs());
            }
            assert!(diff <= 1e-12 * scale, "step {j}: drift {diff:.3e}");
        }
    }

    #[test]
    fn halving_dt_quarters_the_temporal_error() {
        // With eigenvector initial data the spatial part of the march is
        // exact, so the defect against the semi-discrete decay law isolates
        // the time-stepping error, which is second order.
        let a = 0.7;
        let grid = build_grid(1.0, 300).unwrap();
        let y0 = sine_field(&grid, std::f64::consts::PI);
        let mu = discrete_mode_decay(&grid) + a;
        let horizon = 0.4;
        let err_at = |nt: usize| -> f64 {
            let tg = build_time_grid(horizon, nt).unwrap();
            let traj = forward_solve(&scalar(a), &scalar(1.0), &y0, None, &grid, &tg).unwrap();
            let want = (-mu * horizon).exp();
            let mut worst = 0.0f64;
            for i in 0..grid.nx {
                worst =
                    worst.max((traj.final_state().values[(0, i)] - want * y0.values[(0, i)]).abs());
            }
            worst / want
        };
        let coarse = err_at(50);
        let fine = err_at(100);
        let ratio = coarse / fine;
        assert!(
            (3.4..=4.6).contains(&ratio),
            "temporal convergence ratio {ratio:.3} (coarse {coarse:.3e}, fine {fine:.3e})"
        );
    }

    #[test]
    fn zero_data_stays_exactly_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let grid = build_grid(1.0, 20).unwrap();
        let tg = build_time_grid(0.5, 30).unwrap();
        let zero = StateField::zeros(2, grid.nx);
        let traj = forward_solve(
            &a,
            &DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            &zero,
            None,
            &grid,
            &tg,
        )
        .unwrap();
        for snap in &traj.snapshots {
            assert!(snap.values.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn observation_respects_mask_and_matches_direct_product() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -0.3, 0.4, 0.9]);
        let b = DMatrix::from_row_slice(2, 2, &[0.2, 1.0, -0.5, 0.3]);
        let grid = build_grid(1.0, 25).unwrap();
        let tg = build_time_grid(0.3, 12).unwrap();
        let mask = omega_mask(&grid, &[(0.1, 0.4)]).unwrap();
        let psi_t = StateField::from_fn(2, grid.nx, |c, i| ((i * 2 + c) as f64 * 0.19).sin());
        let sweep = adjoint_solve(&a, &psi_t, &grid, &tg).unwrap();
        let obs = observe(&sweep, &b, &mask).unwrap();
        assert!(obs.respects_mask());
        assert_eq!(obs.values.len(), tg.nt);
        for (j, slot) in obs.values.iter().enumerate() {
            let direct = b.transpose() * &sweep.quadrature[j].values;
            for (i, w) in mask.weights.iter().enumerate() {
                for c in 0..2 {
                    if *w == 0.0 {
                        assert_eq!(slot[(c, i)], 0.0);
                    } else {
                        assert_abs_diff_eq!(slot[(c, i)], direct[(c, i)], epsilon = 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let grid = build_grid(1.0, 10).unwrap();
        let tg = build_time_grid(0.5, 5).unwrap();
        let bad_y0 = StateField::zeros(3, grid.nx);
        assert!(matches!(
            forward_solve(&a, &b, &bad_y0, None, &grid, &tg),
            Err(CoreError::InvalidDimension(_))
        ));
        let other_tg = build_time_grid(0.5, 6).unwrap();
        let mask = omega_mask(&grid, &[(0.2, 0.8)]).unwrap();
        let ctl = ControlSignal::zeros(other_tg, 1, mask);
        let y0 = StateField::zeros(2, grid.nx);
        assert!(matches!(
            forward_solve(&a, &b, &y0, Some(&ctl), &grid, &tg),
            Err(CoreError::InvalidArgument(_))
        ));
    }
}
