//! Configuration schema for `syncctl` runs.
//!
//! A single JSON file describes the coupled system, the domain, the control
//! region, the initial data and the solver knobs for every subcommand. The
//! schema is strict: unknown keys are rejected so that typos surface as
//! errors instead of silently falling back to defaults.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use syncctl_core::{
    build_grid, omega_mask, CouplingPair, HumOptions, OmegaMask, SpatialGrid, StateField,
    TimeOptions,
};

use crate::error::CliError;

/// Default file stem for the run report.
pub const REPORT_FILE: &str = "report.json";
/// Default trajectory snapshot stride (keep every snapshot).
pub const DEFAULT_STRIDE: usize = 1;
/// Default time-step counts when the config leaves them out.
pub const DEFAULT_NT: usize = 200;
/// Default zero-control window appended after the horizon.
pub const DEFAULT_POST_HORIZON: f64 = 0.5;

/// Top-level configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub matrices: MatricesSection,
    pub domain: DomainSection,
    /// Control region as a union of open intervals `[a, b]` inside the domain.
    pub omega: Vec<[f64; 2]>,
    /// One spec per state component.
    pub initial_state: Vec<ComponentSpec>,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mintime: Option<MinTimeSection>,
    #[serde(default)]
    pub outputs: OutputsSection,
}

/// The coupling matrix `A` and input matrix `B`, given row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatricesSection {
    /// Number of state components.
    pub n: usize,
    /// Number of control inputs.
    pub m: usize,
    /// `n × n` entries, row-major.
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    /// `n × m` entries, row-major.
    #[serde(rename = "B")]
    pub b: Vec<f64>,
}

/// The spatial interval and its discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    /// Length of the interval `(0, L)`.
    pub length: f64,
    /// Number of grid cells; interior nodes carry the unknowns.
    pub nx: usize,
}

/// Initial datum for one component.
///
/// Externally tagged: `{"sin": {"k": 1}}`, `{"const": {"c": 0.0}}` or
/// `{"values": {"file": "y0_comp0.txt"}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentSpec {
    /// `sin(kπx/L)` — a Dirichlet eigenfunction.
    Sin(SinSpec),
    /// Constant value (nonzero constants are incompatible with the Dirichlet
    /// boundary but still legal as data).
    Const(ConstSpec),
    /// Nodal values read from a whitespace-separated text file, resolved
    /// relative to the config file.
    Values(ValuesSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinSpec {
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstSpec {
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValuesSpec {
    pub file: PathBuf,
}

/// Horizons and step counts. Every field is optional; commands that need a
/// missing field fail with a config error naming it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    /// Horizon for `simulate` and `min-norm`.
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Time steps over `[0, T]` (default [`DEFAULT_NT`]).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nt: Option<usize>,
    /// Reference step count for horizon-sweeping solves: each horizon gets its
    /// own grid with this many steps (default [`DEFAULT_NT`]).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nt_ref: Option<usize>,
    /// Zero-control window appended after the horizon for verification
    /// (default [`DEFAULT_POST_HORIZON`]).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post_horizon: Option<f64>,
    /// Horizons sampled by `norm-curve`. May be empty.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_values: Option<Vec<f64>>,
}

/// Overrides for the dual conjugate-gradient solver; absent fields keep the
/// library defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_reg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_tol: Option<f64>,
}

/// Inputs for the `min-time` command; absent numeric fields keep the library
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinTimeSection {
    /// Control-norm budget. Required by `min-time`.
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(rename = "T_lo", skip_serializing_if = "Option::is_none")]
    pub t_lo: Option<f64>,
    #[serde(rename = "T_hi", skip_serializing_if = "Option::is_none")]
    pub t_hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bisect_tol: Option<f64>,
    #[serde(rename = "T_max", skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
}

/// Where and what to write.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    /// Output directory; overridden by `--out` (default `out`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Artifact classes to write: `"json"` (the report) and/or `"csv"`
    /// (default both).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<String>>,
    /// Keep every `stride`-th trajectory snapshot (default 1).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
}

/// Which artifact classes a run writes.
#[derive(Debug, Clone, Copy)]
pub struct Formats {
    pub json: bool,
    pub csv: bool,
}

/// A parsed, validated configuration with the problem objects assembled.
#[derive(Debug)]
pub struct Loaded {
    pub config: ProblemConfig,
    /// Raw bytes of the config file, hashed into the report.
    pub raw: Vec<u8>,
    pub pair: CouplingPair,
    pub grid: SpatialGrid,
    pub mask: OmegaMask,
    pub y0: StateField,
    pub hum: HumOptions,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Read, parse and validate a config file, assembling the solver inputs.
pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let raw = std::fs::read(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let text = std::str::from_utf8(&raw)
        .map_err(|e| config_err(format!("{}: not valid UTF-8: {e}", path.display())))?;
    let config: ProblemConfig = serde_json::from_str(text).map_err(|e| {
        config_err(format!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    assemble(config, raw, base_dir)
}

/// Validate an already-parsed config and assemble the solver inputs.
/// `base_dir` anchors relative `values` file paths.
pub fn assemble(config: ProblemConfig, raw: Vec<u8>, base_dir: &Path) -> Result<Loaded, CliError> {
    let m = &config.matrices;
    if m.n == 0 {
        return Err(config_err("matrices.n: must be at least 1"));
    }
    if m.m == 0 {
        return Err(config_err("matrices.m: must be at least 1"));
    }
    if m.a.len() != m.n * m.n {
        return Err(config_err(format!(
            "matrices.A: expected {} entries, got {}",
            m.n * m.n,
            m.a.len()
        )));
    }
    if m.b.len() != m.n * m.m {
        return Err(config_err(format!(
            "matrices.B: expected {} entries, got {}",
            m.n * m.m,
            m.b.len()
        )));
    }
    for (name, entries) in [("matrices.A", &m.a), ("matrices.B", &m.b)] {
        if let Some(bad) = entries.iter().find(|v| !v.is_finite()) {
            return Err(config_err(format!("{name}: non-finite entry {bad}")));
        }
    }
    let a = DMatrix::from_row_slice(m.n, m.n, &m.a);
    let b = DMatrix::from_row_slice(m.n, m.m, &m.b);
    let pair = CouplingPair::new(a, b).map_err(|e| config_err(format!("matrices: {e}")))?;

    let grid = build_grid(config.domain.length, config.domain.nx)
        .map_err(|e| config_err(format!("domain: {e}")))?;

    if config.omega.is_empty() {
        return Err(config_err("omega: at least one interval required"));
    }
    let intervals: Vec<(f64, f64)> = config.omega.iter().map(|iv| (iv[0], iv[1])).collect();
    let mask = omega_mask(&grid, &intervals).map_err(|e| config_err(format!("omega: {e}")))?;

    if config.initial_state.len() != m.n {
        return Err(config_err(format!(
            "initial_state: expected {} components, got {}",
            m.n,
            config.initial_state.len()
        )));
    }
    let y0 = resolve_initial_state(&config.initial_state, &grid, base_dir)?;

    let hum = hum_options(&config.solver)?;

    Ok(Loaded {
        config,
        raw,
        pair,
        grid,
        mask,
        y0,
        hum,
    })
}

fn resolve_initial_state(
    specs: &[ComponentSpec],
    grid: &SpatialGrid,
    base_dir: &Path,
) -> Result<StateField, CliError> {
    let nx = grid.nx;
    let mut field = StateField::zeros(specs.len(), nx);
    for (c, spec) in specs.iter().enumerate() {
        match spec {
            ComponentSpec::Sin(SinSpec { k }) => {
                if *k == 0 {
                    return Err(config_err(format!(
                        "initial_state[{c}].sin: k must be at least 1"
                    )));
                }
                let freq = *k as f64 * std::f64::consts::PI / grid.length;
                for i in 0..nx {
                    field.values[(c, i)] = (freq * grid.node(i)).sin();
                }
            }
            ComponentSpec::Const(ConstSpec { c: value }) => {
                if !value.is_finite() {
                    return Err(config_err(format!(
                        "initial_state[{c}].const: non-finite value {value}"
                    )));
                }
                for i in 0..nx {
                    field.values[(c, i)] = *value;
                }
            }
            ComponentSpec::Values(ValuesSpec { file }) => {
                let full = if file.is_absolute() {
                    file.clone()
                } else {
                    base_dir.join(file)
                };
                let text = std::fs::read_to_string(&full).map_err(|e| CliError::Io {
                    path: full.display().to_string(),
                    source: e,
                })?;
                let parsed: Result<Vec<f64>, _> =
                    text.split_whitespace().map(str::parse::<f64>).collect();
                let values = parsed.map_err(|e| {
                    config_err(format!(
                        "initial_state[{c}].values: {}: {e}",
                        full.display()
                    ))
                })?;
                if values.len() != nx {
                    return Err(config_err(format!(
                        "initial_state[{c}].values: expected {nx} values, got {}",
                        values.len()
                    )));
                }
                if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
                    return Err(config_err(format!(
                        "initial_state[{c}].values: non-finite entry {bad}"
                    )));
                }
                for (i, v) in values.iter().enumerate() {
                    field.values[(c, i)] = *v;
                }
            }
        }
    }
    Ok(field)
}

fn hum_options(section: &SolverSection) -> Result<HumOptions, CliError> {
    let mut hum = HumOptions::default();
    if let Some(v) = section.cg_tol {
        hum.cg_tol = v;
    }
    if let Some(v) = section.cg_max_iter {
        hum.cg_max_iter = v;
    }
    if let Some(v) = section.eps_reg {
        hum.eps_reg = v;
    }
    if let Some(v) = section.target_tol {
        hum.target_tol = Some(v);
    }
    Ok(hum)
}

impl Loaded {
    /// Horizon and step count for `simulate` and `min-norm`.
    pub fn horizon(&self) -> Result<(f64, usize), CliError> {
        let t = self
            .config
            .time
            .t
            .ok_or_else(|| config_err("time.T: required for this command"))?;
        if !(t.is_finite() && t > 0.0) {
            return Err(config_err(format!(
                "time.T: must be positive and finite, got {t}"
            )));
        }
        Ok((t, self.config.time.nt.unwrap_or(DEFAULT_NT)))
    }

    pub fn nt_ref(&self) -> usize {
        self.config.time.nt_ref.unwrap_or(DEFAULT_NT)
    }

    pub fn post_horizon(&self) -> Result<f64, CliError> {
        let p = self
            .config
            .time
            .post_horizon
            .unwrap_or(DEFAULT_POST_HORIZON);
        if !(p.is_finite() && p >= 0.0) {
            return Err(config_err(format!(
                "time.post_horizon: must be nonnegative and finite, got {p}"
            )));
        }
        Ok(p)
    }

    /// Horizon samples for `norm-curve`; an empty list is allowed and yields
    /// header-only output.
    pub fn t_values(&self) -> Result<Vec<f64>, CliError> {
        self.config
            .time
            .t_values
            .clone()
            .ok_or_else(|| config_err("time.t_values: required for norm-curve"))
    }

    /// Budget and search options for `min-time`.
    pub fn mintime(&self) -> Result<(f64, TimeOptions), CliError> {
        let section = self
            .config
            .mintime
            .as_ref()
            .ok_or_else(|| config_err("mintime: section required for min-time"))?;
        let m = section
            .m
            .ok_or_else(|| config_err("mintime.M: required for min-time"))?;
        let mut opts = TimeOptions {
            nt_ref: self.nt_ref(),
            ..Default::default()
        };
        if let Some(v) = section.t_lo {
            opts.t_lo = v;
        }
        if let Some(v) = section.t_hi {
            opts.t_hi = v;
        }
        if let Some(v) = section.bisect_tol {
            opts.bisect_tol = v;
        }
        if let Some(v) = section.t_max {
            opts.t_max = v;
        }
        Ok((m, opts))
    }

    pub fn stride(&self) -> Result<usize, CliError> {
        let stride = self.config.outputs.stride.unwrap_or(DEFAULT_STRIDE);
        if stride == 0 {
            return Err(config_err("outputs.stride: must be at least 1"));
        }
        Ok(stride)
    }

    pub fn formats(&self) -> Result<Formats, CliError> {
        let mut formats = Formats {
            json: false,
            csv: false,
        };
        match &self.config.outputs.formats {
            None => {
                formats.json = true;
                formats.csv = true;
            }
            Some(list) => {
                if list.is_empty() {
                    return Err(config_err("outputs.formats: at least one format required"));
                }
                for f in list {
                    match f.as_str() {
                        "json" => formats.json = true,
                        "csv" => formats.csv = true,
                        other => {
                            return Err(config_err(format!(
                                "outputs.formats: unknown format \"{other}\""
                            )))
                        }
                    }
                }
            }
        }
        Ok(formats)
    }

    /// Output directory: the `--out` flag wins, then `outputs.dir`, then `out`.
    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        self.config
            .outputs
            .dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "matrices": {"n": 2, "m": 1, "A": [1.0, 0.0, 0.5, 0.5], "B": [0.0, 1.0]},
            "domain": {"length": 1.0, "nx": 20},
            "omega": [[0.3, 0.8]],
            "initial_state": [{"sin": {"k": 1}}, {"const": {"c": 0.0}}]
        }"#
        .to_string()
    }

    fn parse(text: &str) -> Result<Loaded, CliError> {
        let config: ProblemConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("parse: {e}")))?;
        assemble(config, text.as_bytes().to_vec(), Path::new("."))
    }

    #[test]
    fn minimal_config_assembles() {
        let loaded = parse(&minimal_json()).unwrap();
        assert_eq!(loaded.pair.n(), 2);
        assert_eq!(loaded.grid.nx, 20);
        assert_eq!(loaded.y0.k(), 2);
        // sin(π·x) at the mid node is close to 1; the const component is 0.
        assert!(loaded.y0.values.row(0).iter().cloned().fold(0.0, f64::max) > 0.9);
        assert!(loaded.y0.values.row(1).iter().all(|v| *v == 0.0));
        assert_eq!(loaded.hum.cg_max_iter, HumOptions::default().cg_max_iter);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = minimal_json().replace("\"omega\"", "\"bogus_key\": 1, \"omega\"");
        let err = serde_json::from_str::<ProblemConfig>(&text).unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn unknown_nested_keys_are_rejected() {
        let text = minimal_json().replace("\"nx\": 20", "\"nx\": 20, \"typo\": 3");
        let err = serde_json::from_str::<ProblemConfig>(&text).unwrap_err();
        assert!(err.to_string().contains("typo"), "{err}");
    }

    #[test]
    fn unknown_component_keys_are_rejected() {
        let text = minimal_json().replace("{\"k\": 1}", "{\"k\": 1, \"stray\": 2}");
        let err = serde_json::from_str::<ProblemConfig>(&text).unwrap_err();
        assert!(err.to_string().contains("stray"), "{err}");
    }

    #[test]
    fn missing_section_names_the_field() {
        let text = minimal_json().replace("\"omega\": [[0.3, 0.8]],", "");
        let err = serde_json::from_str::<ProblemConfig>(&text).unwrap_err();
        assert!(err.to_string().contains("omega"), "{err}");
    }

    #[test]
    fn matrix_length_mismatch_is_reported() {
        let text = minimal_json().replace("[1.0, 0.0, 0.5, 0.5]", "[1.0, 0.0, 0.5]");
        let err = parse(&text).unwrap_err();
        assert!(
            err.to_string().contains("matrices.A: expected 4 entries"),
            "{err}"
        );
    }

    #[test]
    fn component_count_mismatch_is_reported() {
        let text = minimal_json().replace(", {\"const\": {\"c\": 0.0}}", "");
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("expected 2 components"), "{err}");
    }

    #[test]
    fn values_file_round_trips() {
        let dir = std::env::temp_dir().join(format!("syncctl-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let data: Vec<String> = (0..20).map(|i| format!("{:.3}", i as f64 * 0.1)).collect();
        std::fs::write(dir.join("comp.txt"), data.join("\n")).unwrap();
        let text = minimal_json().replace(
            "{\"const\": {\"c\": 0.0}}",
            "{\"values\": {\"file\": \"comp.txt\"}}",
        );
        let config: ProblemConfig = serde_json::from_str(&text).unwrap();
        let loaded = assemble(config, text.into_bytes(), &dir).unwrap();
        assert!((loaded.y0.values[(1, 10)] - 1.0).abs() < 1e-12);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn serialization_round_trip_is_idempotent() {
        let text = r#"{
            "matrices": {"n": 2, "m": 1, "A": [1.0, 0.0, 0.5, 0.5], "B": [0.0, 1.0]},
            "domain": {"length": 1.0, "nx": 20},
            "omega": [[0.3, 0.8]],
            "initial_state": [{"sin": {"k": 1}}, {"const": {"c": 0.0}}],
            "time": {"T": 1.0, "nt": 100},
            "solver": {"cg_tol": 1e-9},
            "mintime": {"M": 0.5, "T_hi": 3.0},
            "outputs": {"dir": "results", "formats": ["csv"]}
        }"#;
        let first: ProblemConfig = serde_json::from_str(text).unwrap();
        let emitted = serde_json::to_string_pretty(&first).unwrap();
        let second: ProblemConfig = serde_json::from_str(&emitted).unwrap();
        assert_eq!(first, second);
        assert_eq!(emitted, serde_json::to_string_pretty(&second).unwrap());
    }

    #[test]
    fn capitalized_keys_are_required() {
        // Lowercase `a` must be rejected: the schema names the matrix `A`.
        let text = minimal_json().replace("\"A\"", "\"a\"");
        assert!(serde_json::from_str::<ProblemConfig>(&text).is_err());
    }

    #[test]
    fn format_and_stride_validation() {
        let mut loaded = parse(&minimal_json()).unwrap();
        loaded.config.outputs.formats = Some(vec!["yaml".into()]);
        assert!(loaded.formats().is_err());
        loaded.config.outputs.formats = Some(vec!["csv".into()]);
        let f = loaded.formats().unwrap();
        assert!(f.csv && !f.json);
        loaded.config.outputs.stride = Some(0);
        assert!(loaded.stride().is_err());
    }
}
