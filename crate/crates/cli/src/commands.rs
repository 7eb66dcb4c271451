//! Implementations of the five subcommands.
//!
//! Every command classifies the coupling pair first and embeds the
//! classification in the report. Commands that need a synchronizable pair
//! stop with a structured report (and the dedicated exit code) when the
//! classification is `Neither`, instead of erroring without artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use syncctl_core::sync_algebra::RANK_REL_TOL;
use syncctl_core::{
    build_time_grid, classify, forward_solve, norm_curve, solve_min_norm, solve_min_time,
    verify_min_norm, verify_min_time, BranchProblem, ControlSignal, Hypothesis, MinTimeStatus,
    StateField, SyncStructure, TimeGrid, Trajectory,
};

use crate::config::{Formats, Loaded, REPORT_FILE};
use crate::error::{CliError, EXIT_NOT_SYNCHRONIZABLE, EXIT_OK, EXIT_SOLVER};
use crate::output::{self, Phase};
use crate::report::{self, Classification, Payload, RunReport, Timings, Verification};

/// Free-phase time resolution used when no control supplies a step hint;
/// mirrors the resolution of the library's verification re-simulation so the
/// exported trajectory lines up with the reported residual curve.
const FREE_PHASE_STEPS: usize = 200;

/// Everything a command execution needs, assembled once.
pub struct Workspace {
    pub loaded: Loaded,
    pub structure: SyncStructure,
    pub out_dir: PathBuf,
    pub formats: Formats,
    pub stride: usize,
    started: Instant,
    warnings: Vec<String>,
}

impl Workspace {
    pub fn new(loaded: Loaded, out_flag: Option<&Path>) -> Result<Self, CliError> {
        let structure = classify(&loaded.pair, RANK_REL_TOL);
        let out_dir = loaded.out_dir(out_flag);
        let formats = loaded.formats()?;
        let stride = loaded.stride()?;
        std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Io {
            path: out_dir.display().to_string(),
            source: e,
        })?;
        let mut warnings = Vec::new();
        if structure.rank_marginal {
            warnings.push(
                "rank decision is numerically marginal; classification may be fragile".to_string(),
            );
        }
        Ok(Workspace {
            loaded,
            structure,
            out_dir,
            formats,
            stride,
            started: Instant::now(),
            warnings,
        })
    }

    fn classification(&self) -> Classification {
        Classification::from_structure(&self.structure)
    }

    fn emit_report(
        &self,
        command: &str,
        payload: Payload,
        verification: Option<Verification>,
        solve_ms: f64,
    ) -> Result<(), CliError> {
        if !self.formats.json {
            return Ok(());
        }
        let report = RunReport {
            command: command.to_string(),
            config_sha256: report::config_hash(&self.loaded.raw),
            classification: self.classification(),
            payload,
            verification,
            timings_ms: Timings {
                total: self.started.elapsed().as_secs_f64() * 1e3,
                solve: solve_ms,
            },
            warnings: self.warnings.clone(),
        };
        output::write_report(&self.out_dir.join(REPORT_FILE), &report)
    }

    /// Shared early exit: the command needs a synchronizable pair but the
    /// classification said `Neither`. Writes the report, prints the verdict,
    /// returns the dedicated exit code.
    fn bail_not_synchronizable(&self, command: &str) -> Result<i32, CliError> {
        self.emit_report(command, Payload::NotSynchronizable {}, None, 0.0)?;
        println!(
            "classification: Neither (rank {} of {} required) — not exactly synchronizable",
            self.structure.rank_value, self.structure.rank_required
        );
        println!("report: {}", self.out_dir.join(REPORT_FILE).display());
        Ok(EXIT_NOT_SYNCHRONIZABLE)
    }

    fn print_classification(&self) {
        println!(
            "classification: {} (rank {} of {} required)",
            self.structure.hypothesis, self.structure.rank_value, self.structure.rank_required
        );
        for w in &self.warnings {
            println!("warning: {w}");
        }
    }
}

/// Relative synchronization defect of one snapshot, matching the library's
/// verification convention: under H1 the difference-map norm, under H2 the
/// full state norm, both relative to the initial defect.
fn sync_norm(structure: &SyncStructure, snap: &StateField, dx: f64) -> f64 {
    match structure.hypothesis {
        Hypothesis::H1 => StateField {
            values: &structure.difference * &snap.values,
        }
        .norm(dx),
        _ => snap.norm(dx),
    }
}

fn sync_denominator(structure: &SyncStructure, y0: &StateField, dx: f64) -> f64 {
    let raw = sync_norm(structure, y0, dx);
    if raw > 0.0 {
        raw
    } else if y0.norm(dx) > 0.0 {
        y0.norm(dx)
    } else {
        1.0
    }
}

/// A single-snapshot trajectory holding just the initial state, for exports
/// when nothing is simulated (no control and no post-horizon window).
fn initial_only(y0: &StateField) -> Trajectory {
    Trajectory {
        timegrid: TimeGrid {
            horizon: 0.0,
            nt: 0,
            dt: 0.0,
        },
        snapshots: vec![y0.clone()],
    }
}

/// Simulated phases for export: the controlled phase (when a control exists)
/// followed by the free phase over the post-horizon window. Returns the
/// phases' trajectories and offsets; the phase layout matches the library's
/// verification re-simulation.
fn simulate_phases(
    ws: &Workspace,
    control: Option<&ControlSignal>,
    post_horizon: f64,
) -> Result<Vec<(f64, Trajectory, bool)>, CliError> {
    let loaded = &ws.loaded;
    let mut phases = Vec::new();
    let mut state = loaded.y0.clone();
    let mut offset = 0.0;
    let mut dt_hint = None;
    if let Some(ctl) = control {
        let traj = forward_solve(
            &loaded.pair.a,
            &loaded.pair.b,
            &state,
            Some(ctl),
            &loaded.grid,
            &ctl.timegrid,
        )?;
        state = traj.final_state().clone();
        offset = ctl.timegrid.horizon;
        dt_hint = Some(ctl.timegrid.dt);
        phases.push((0.0, traj, false));
    }
    if post_horizon > 0.0 {
        let dt = dt_hint.unwrap_or(post_horizon / FREE_PHASE_STEPS as f64);
        let nt = ((post_horizon / dt).ceil() as usize).max(1);
        let grid = build_time_grid(post_horizon, nt)?;
        let traj = forward_solve(
            &loaded.pair.a,
            &loaded.pair.b,
            &state,
            None,
            &loaded.grid,
            &grid,
        )?;
        let skip_shared = !phases.is_empty();
        phases.push((offset, traj, skip_shared));
    }
    if phases.is_empty() {
        phases.push((0.0, initial_only(&loaded.y0), false));
    }
    Ok(phases)
}

fn write_phase_outputs(
    ws: &Workspace,
    phases: &[(f64, Trajectory, bool)],
    curve: &[(f64, f64)],
    control: Option<&ControlSignal>,
    with_control_file: bool,
) -> Result<(), CliError> {
    if !ws.formats.csv {
        return Ok(());
    }
    let borrowed: Vec<Phase<'_>> = phases
        .iter()
        .map(|(offset, traj, skip)| Phase {
            offset: *offset,
            trajectory: traj,
            skip_first: *skip,
        })
        .collect();
    output::write_trajectory(
        &ws.out_dir.join("trajectory.csv"),
        &borrowed,
        &ws.loaded.grid,
        ws.stride,
    )?;
    output::write_sync_residual(&ws.out_dir.join("sync_residual.csv"), curve)?;
    if with_control_file {
        output::write_control(&ws.out_dir.join("control.csv"), control, &ws.loaded.grid)?;
    }
    Ok(())
}

pub fn classify_cmd(ws: &mut Workspace) -> Result<i32, CliError> {
    ws.emit_report("classify", Payload::Classify {}, None, 0.0)?;
    ws.print_classification();
    println!("report: {}", ws.out_dir.join(REPORT_FILE).display());
    if ws.structure.hypothesis == Hypothesis::Neither {
        return Ok(EXIT_NOT_SYNCHRONIZABLE);
    }
    Ok(EXIT_OK)
}

pub fn simulate_cmd(ws: &mut Workspace) -> Result<i32, CliError> {
    let (t, nt) = ws.loaded.horizon()?;
    let post = ws.loaded.post_horizon()?;
    let solve_started = Instant::now();

    // Free evolution over [0, T]: same export layout as the controlled
    // commands, with the first phase uncontrolled.
    let tg = build_time_grid(t, nt)?;
    let first = forward_solve(
        &ws.loaded.pair.a,
        &ws.loaded.pair.b,
        &ws.loaded.y0,
        None,
        &ws.loaded.grid,
        &tg,
    )?;
    let mut phases = vec![(0.0, first, false)];
    if post > 0.0 {
        let post_nt = ((post / tg.dt).ceil() as usize).max(1);
        let post_tg = build_time_grid(post, post_nt)?;
        let free = forward_solve(
            &ws.loaded.pair.a,
            &ws.loaded.pair.b,
            phases[0].1.final_state(),
            None,
            &ws.loaded.grid,
            &post_tg,
        )?;
        phases.push((t, free, true));
    }

    let dx = ws.loaded.grid.dx;
    let denom = sync_denominator(&ws.structure, &ws.loaded.y0, dx);
    let mut curve = Vec::new();
    for (offset, traj, skip) in &phases {
        for (j, snap) in traj.snapshots.iter().enumerate().skip(usize::from(*skip)) {
            curve.push((
                offset + traj.timegrid.knot(j),
                sync_norm(&ws.structure, snap, dx) / denom,
            ));
        }
    }
    let solve_ms = solve_started.elapsed().as_secs_f64() * 1e3;

    let horizon_index = phases[0].1.snapshots.len() - 1;
    let payload = Payload::Simulate {
        horizon: t,
        nt,
        post_horizon: post,
        sync_ratio_initial: curve.first().map(|&(_, r)| r).unwrap_or(0.0),
        sync_ratio_final: curve.get(horizon_index).map(|&(_, r)| r).unwrap_or(0.0),
    };
    write_phase_outputs(ws, &phases, &curve, None, false)?;
    ws.emit_report("simulate", payload, None, solve_ms)?;
    ws.print_classification();
    println!(
        "simulated [0, {t}] plus {post} free; final sync ratio {:.3e}",
        curve.last().map(|&(_, r)| r).unwrap_or(0.0)
    );
    println!("outputs: {}", ws.out_dir.display());
    Ok(EXIT_OK)
}

pub fn min_norm_cmd(ws: &mut Workspace) -> Result<i32, CliError> {
    if ws.structure.hypothesis == Hypothesis::Neither {
        return ws.bail_not_synchronizable("min-norm");
    }
    let (t, nt) = ws.loaded.horizon()?;
    let post = ws.loaded.post_horizon()?;
    let problem = BranchProblem::new(
        &ws.loaded.pair,
        &ws.structure,
        &ws.loaded.y0,
        &ws.loaded.grid,
        &ws.loaded.mask,
    )?;
    let tg = build_time_grid(t, nt)?;

    let solve_started = Instant::now();
    let result = solve_min_norm(&problem, &tg, &ws.loaded.hum)?;
    let solve_ms = solve_started.elapsed().as_secs_f64() * 1e3;

    if !result.converged {
        ws.warnings.push(format!(
            "minimal-norm solve stopped at residual {:.3e} (target {:.3e}); results are partial",
            result.residual, result.delta_used
        ));
    }

    let verification = verify_min_norm(
        &ws.loaded.pair,
        &ws.structure,
        &ws.loaded.y0,
        &ws.loaded.grid,
        &result,
        post,
    )?;
    let phases = simulate_phases(ws, Some(&result.control), post)?;
    write_phase_outputs(
        ws,
        &phases,
        &verification.residual_curve,
        Some(&result.control),
        true,
    )?;
    ws.emit_report(
        "min-norm",
        report::min_norm_payload(t, nt, &result),
        Some(Verification::from_report(&verification)),
        solve_ms,
    )?;
    ws.print_classification();
    println!(
        "minimal norm N(T={t}) = {:.6e} ({} iterations, {})",
        result.norm_value,
        result.iterations,
        if result.converged {
            "converged"
        } else {
            "NOT converged"
        }
    );
    println!(
        "final sync ratio {:.3e}, post-horizon max {:.3e}",
        verification.sync_ratio_final, verification.post_horizon_max
    );
    println!("outputs: {}", ws.out_dir.display());
    if result.converged {
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_SOLVER)
    }
}

pub fn norm_curve_cmd(ws: &mut Workspace) -> Result<i32, CliError> {
    if ws.structure.hypothesis == Hypothesis::Neither {
        return ws.bail_not_synchronizable("norm-curve");
    }
    let t_values = ws.loaded.t_values()?;
    let nt_ref = ws.loaded.nt_ref();
    let problem = BranchProblem::new(
        &ws.loaded.pair,
        &ws.structure,
        &ws.loaded.y0,
        &ws.loaded.grid,
        &ws.loaded.mask,
    )?;

    let solve_started = Instant::now();
    let points = norm_curve(&problem, &t_values, nt_ref, &ws.loaded.hum)?;
    let solve_ms = solve_started.elapsed().as_secs_f64() * 1e3;

    let unconverged: Vec<f64> = points
        .iter()
        .filter(|p| !p.converged)
        .map(|p| p.t)
        .collect();
    if !unconverged.is_empty() {
        ws.warnings.push(format!(
            "norm solves did not converge at horizons {unconverged:?}"
        ));
    }

    if ws.formats.csv {
        output::write_norm_curve(&ws.out_dir.join("norm_curve.csv"), &points)?;
    }
    ws.emit_report(
        "norm-curve",
        Payload::NormCurve {
            nt_ref,
            points: points.iter().map(Into::into).collect(),
        },
        None,
        solve_ms,
    )?;
    ws.print_classification();
    println!("norm curve: {} horizons sampled", points.len());
    for p in &points {
        println!(
            "  T = {:<8} N = {:.6e}  {}",
            p.t,
            p.norm_value,
            if p.converged {
                "converged"
            } else {
                "NOT converged"
            }
        );
    }
    println!("outputs: {}", ws.out_dir.display());
    if unconverged.is_empty() {
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_SOLVER)
    }
}

pub fn min_time_cmd(ws: &mut Workspace) -> Result<i32, CliError> {
    if ws.structure.hypothesis == Hypothesis::Neither {
        return ws.bail_not_synchronizable("min-time");
    }
    let (m, opts) = ws.loaded.mintime()?;
    let post = ws.loaded.post_horizon()?;
    let problem = BranchProblem::new(
        &ws.loaded.pair,
        &ws.structure,
        &ws.loaded.y0,
        &ws.loaded.grid,
        &ws.loaded.mask,
    )?;

    let solve_started = Instant::now();
    let result = solve_min_time(&problem, m, &opts, &ws.loaded.hum)?;
    let solve_ms = solve_started.elapsed().as_secs_f64() * 1e3;

    if result.inconclusive {
        ws.warnings.push(
            "budget sits within 5% of the limit-norm estimate; refusal may be a resolution artifact"
                .to_string(),
        );
    }

    let verification = verify_min_time(
        &ws.loaded.pair,
        &ws.structure,
        &ws.loaded.y0,
        &ws.loaded.grid,
        &result,
        post,
    )?;
    let phases = simulate_phases(ws, result.control.as_ref(), post)?;
    write_phase_outputs(
        ws,
        &phases,
        &verification.residual_curve,
        result.control.as_ref(),
        true,
    )?;
    ws.emit_report(
        "min-time",
        report::min_time_payload(&result),
        Some(Verification::from_report(&verification)),
        solve_ms,
    )?;
    ws.print_classification();
    match result.status {
        MinTimeStatus::Solved => println!(
            "minimal time T* = {:.6} with norm {:.6e} (budget {m:.6e}, {} bisection solves)",
            result.t_star.unwrap_or(f64::NAN),
            result.achieved_norm.unwrap_or(f64::NAN),
            result.bisection_iters
        ),
        MinTimeStatus::TrivialZero => {
            println!("initial data is already synchronized: T* = 0, zero control")
        }
        MinTimeStatus::NoOptimalControl => {
            let est = result
                .m_limit_estimate
                .as_ref()
                .map(|e| e.value)
                .unwrap_or(f64::NAN);
            println!(
                "no optimal control: budget {m:.6e} does not exceed the limit-norm estimate {est:.6e}"
            );
        }
        MinTimeStatus::NotSynchronizable => unreachable!("checked above"),
    }
    println!("outputs: {}", ws.out_dir.display());
    Ok(EXIT_OK)
}
