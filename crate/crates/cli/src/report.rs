//! The JSON run report: one structured document per invocation.

use serde::Serialize;
use sha2::{Digest, Sha256};
use syncctl_core::{
    LimitEstimate, MinNormResult, MinTimeResult, MinTimeStatus, NormCurvePoint, SyncStructure,
    VerificationReport,
};

/// Top-level report written as `report.json`.
#[derive(Debug, Serialize)]
pub struct RunReport {
    /// Which subcommand produced this report.
    pub command: String,
    /// SHA-256 of the raw config file bytes, hex-encoded.
    pub config_sha256: String,
    /// Structural classification of the coupling pair.
    pub classification: Classification,
    /// Command-specific results.
    pub payload: Payload,
    /// Re-simulation check of the computed control, when one was computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<Verification>,
    /// Wall-clock timings in milliseconds. Not covered by the determinism
    /// guarantee; everything else in the report is.
    pub timings_ms: Timings,
    /// Human-readable caveats (marginal rank decisions, unconverged solves).
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub total: f64,
    pub solve: f64,
}

/// Classification block, present in every report.
#[derive(Debug, Serialize)]
pub struct Classification {
    /// `"H1"`, `"H2"` or `"Neither"`.
    pub hypothesis: String,
    pub rank_value: usize,
    pub rank_required: usize,
    pub row_sums: Vec<f64>,
    /// The rank decision sat within 10× of the cutoff.
    pub rank_marginal: bool,
    /// Reduced coupling matrix (row-major), when the row-sum condition holds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_reduced: Option<Vec<f64>>,
}

impl Classification {
    pub fn from_structure(s: &SyncStructure) -> Self {
        Classification {
            hypothesis: s.hypothesis.to_string(),
            rank_value: s.rank_value,
            rank_required: s.rank_required,
            row_sums: s.row_sums.iter().cloned().collect(),
            rank_marginal: s.rank_marginal,
            a_reduced: s
                .a_reduced
                .as_ref()
                .map(|m| m.transpose().iter().cloned().collect()),
        }
    }
}

/// Command-specific results.
#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Classify {},
    /// The command required a synchronizable pair but classification said
    /// `Neither`; no solve was attempted.
    NotSynchronizable {},
    Simulate {
        horizon: f64,
        nt: usize,
        post_horizon: f64,
        sync_ratio_initial: f64,
        sync_ratio_final: f64,
    },
    MinNorm {
        horizon: f64,
        nt: usize,
        norm_value: f64,
        residual: f64,
        target_tolerance: f64,
        iterations: usize,
        converged: bool,
        optimality_gap: f64,
        noise_estimate: f64,
        active_fraction: f64,
    },
    NormCurve {
        nt_ref: usize,
        points: Vec<CurvePoint>,
    },
    MinTime {
        status: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        t_star: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        achieved_norm: Option<f64>,
        m_requested: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        m_limit_estimate: Option<LimitBlock>,
        bisection_iters: usize,
        inconclusive: bool,
    },
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub t: f64,
    pub norm_value: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl From<&NormCurvePoint> for CurvePoint {
    fn from(p: &NormCurvePoint) -> Self {
        CurvePoint {
            t: p.t,
            norm_value: p.norm_value,
            converged: p.converged,
            iterations: p.iterations,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct LimitBlock {
    /// `N(T_max)` — upper bound for the infinite-horizon limit norm.
    pub value: f64,
    /// `N(T_max / 2)`, for judging how settled the estimate is.
    pub half_value: f64,
    pub relative_gap: f64,
    pub t_max: f64,
}

impl From<&LimitEstimate> for LimitBlock {
    fn from(e: &LimitEstimate) -> Self {
        LimitBlock {
            value: e.value,
            half_value: e.half_value,
            relative_gap: e.relative_gap,
            t_max: e.t_max,
        }
    }
}

/// Verification block: re-simulation of the full system with the computed
/// control, plus a zero-control window after the horizon.
#[derive(Debug, Serialize)]
pub struct Verification {
    pub horizon: f64,
    pub post_horizon: f64,
    /// Synchronization ratio at the horizon (relative to the initial defect).
    pub sync_ratio_final: f64,
    /// Largest ratio seen over the post-horizon window.
    pub post_horizon_max: f64,
    pub control_norm: f64,
    pub norm_reference: f64,
    pub norm_relative_error: f64,
    pub budget_satisfied: bool,
}

impl Verification {
    pub fn from_report(v: &VerificationReport) -> Self {
        Verification {
            horizon: v.horizon,
            post_horizon: v.post_horizon,
            sync_ratio_final: v.sync_ratio_final,
            post_horizon_max: v.post_horizon_max,
            control_norm: v.control_norm,
            norm_reference: v.norm_reference,
            norm_relative_error: v.norm_relative_error,
            budget_satisfied: v.budget_satisfied,
        }
    }
}

/// Hex-encoded SHA-256 of the raw config bytes.
pub fn config_hash(raw: &[u8]) -> String {
    let digest = Sha256::digest(raw);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn min_norm_payload(horizon: f64, nt: usize, r: &MinNormResult) -> Payload {
    Payload::MinNorm {
        horizon,
        nt,
        norm_value: r.norm_value,
        residual: r.residual,
        target_tolerance: r.delta_used,
        iterations: r.iterations,
        converged: r.converged,
        optimality_gap: r.optimality_gap,
        noise_estimate: r.noise_estimate,
        active_fraction: r.active_fraction,
    }
}

pub fn min_time_payload(r: &MinTimeResult) -> Payload {
    Payload::MinTime {
        status: status_name(r.status).to_string(),
        t_star: r.t_star,
        achieved_norm: r.achieved_norm,
        m_requested: r.m_requested,
        m_limit_estimate: r.m_limit_estimate.as_ref().map(LimitBlock::from),
        bisection_iters: r.bisection_iters,
        inconclusive: r.inconclusive,
    }
}

pub fn status_name(status: MinTimeStatus) -> &'static str {
    match status {
        MinTimeStatus::TrivialZero => "TrivialZero",
        MinTimeStatus::NoOptimalControl => "NoOptimalControl",
        MinTimeStatus::Solved => "Solved",
        MinTimeStatus::NotSynchronizable => "NotSynchronizable",
    }
}
