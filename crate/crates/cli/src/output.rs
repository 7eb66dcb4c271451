//! File writers for run artifacts.
//!
//! All floating-point values are printed with [`fmt_float`] (17 significant
//! digits), which round-trips `f64` exactly, so identical runs produce
//! byte-identical CSV bodies.

use std::io::Write;
use std::path::Path;

use syncctl_core::{ControlSignal, NormCurvePoint, SpatialGrid, Trajectory};

use crate::error::CliError;
use crate::report::RunReport;

/// Format a float with enough digits to round-trip exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(std::io::BufWriter::new(file))
}

fn finish(mut w: std::io::BufWriter<std::fs::File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn write_line(
    w: &mut std::io::BufWriter<std::fs::File>,
    path: &Path,
    line: &str,
) -> Result<(), CliError> {
    writeln!(w, "{line}").map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Write `report.json` (pretty-printed, stable field order).
pub fn write_report(path: &Path, report: &RunReport) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::Config(format!("report serialization: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Write `norm_curve.csv`: one row per sampled horizon. An empty sample list
/// yields the header only.
pub fn write_norm_curve(path: &Path, points: &[NormCurvePoint]) -> Result<(), CliError> {
    let mut w = create(path)?;
    write_line(&mut w, path, "T,N,converged,iters")?;
    for p in points {
        write_line(
            &mut w,
            path,
            &format!(
                "{},{},{},{}",
                fmt_float(p.t),
                fmt_float(p.norm_value),
                p.converged,
                p.iterations
            ),
        )?;
    }
    finish(w, path)
}

/// Write `control.csv`: rows `t,component,x,value` for every time knot,
/// control component and grid node inside the control region. `None` writes
/// the header only (no control was computed).
pub fn write_control(
    path: &Path,
    control: Option<&ControlSignal>,
    grid: &SpatialGrid,
) -> Result<(), CliError> {
    let mut w = create(path)?;
    write_line(&mut w, path, "t,component,x,value")?;
    if let Some(ctl) = control {
        let support: Vec<usize> = ctl
            .support_mask
            .weights
            .iter()
            .enumerate()
            .filter(|(_, &wt)| wt != 0.0)
            .map(|(i, _)| i)
            .collect();
        for (j, slab) in ctl.values.iter().enumerate() {
            let t = ctl.timegrid.knot(j);
            for comp in 0..slab.nrows() {
                for &i in &support {
                    write_line(
                        &mut w,
                        path,
                        &format!(
                            "{},{comp},{},{}",
                            fmt_float(t),
                            fmt_float(grid.node(i)),
                            fmt_float(slab[(comp, i)])
                        ),
                    )?;
                }
            }
        }
    }
    finish(w, path)
}

/// One simulated phase for trajectory export: a trajectory plus the absolute
/// time of its first snapshot. `skip_first` drops the snapshot shared with
/// the previous phase.
pub struct Phase<'a> {
    pub offset: f64,
    pub trajectory: &'a Trajectory,
    pub skip_first: bool,
}

/// Write `trajectory.csv`: rows `t,component,x,value`, keeping every
/// `stride`-th snapshot (counted across phases) plus the final one.
pub fn write_trajectory(
    path: &Path,
    phases: &[Phase<'_>],
    grid: &SpatialGrid,
    stride: usize,
) -> Result<(), CliError> {
    let mut w = create(path)?;
    write_line(&mut w, path, "t,component,x,value")?;
    let total: usize = phases
        .iter()
        .map(|p| p.trajectory.snapshots.len() - usize::from(p.skip_first))
        .sum();
    let mut index = 0usize;
    for phase in phases {
        let start = usize::from(phase.skip_first);
        for (j, snap) in phase.trajectory.snapshots.iter().enumerate().skip(start) {
            let keep = index.is_multiple_of(stride) || index + 1 == total;
            index += 1;
            if !keep {
                continue;
            }
            let t = phase.offset + phase.trajectory.timegrid.knot(j);
            for comp in 0..snap.k() {
                for i in 0..grid.nx {
                    write_line(
                        &mut w,
                        path,
                        &format!(
                            "{},{comp},{},{}",
                            fmt_float(t),
                            fmt_float(grid.node(i)),
                            fmt_float(snap.values[(comp, i)])
                        ),
                    )?;
                }
            }
        }
    }
    finish(w, path)
}

/// Write `sync_residual.csv`: rows `t,residual` over the controlled horizon
/// and the post-horizon window.
pub fn write_sync_residual(path: &Path, curve: &[(f64, f64)]) -> Result<(), CliError> {
    let mut w = create(path)?;
    write_line(&mut w, path, "t,residual")?;
    for &(t, r) in curve {
        write_line(&mut w, path, &format!("{},{}", fmt_float(t), fmt_float(r)))?;
    }
    finish(w, path)
}
