use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{DiagnosticsFrame, RateReport, RunningIntegrals};
use crate::kkt::KktReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub status: Status,
    pub detail: String,
}

impl InvariantResult {
    pub fn check(ok: bool, detail: impl Into<String>) -> Self {
        InvariantResult { status: if ok { Status::Pass } else { Status::Fail }, detail: detail.into() }
    }

    pub fn skip(detail: impl Into<String>) -> Self {
        InvariantResult { status: Status::NotApplicable, detail: detail.into() }
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }
}

pub type InvariantMap = BTreeMap<String, InvariantResult>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    NumericFailure { message: String },
}

/// Medians of the constructive-multiplier residuals over the first decade after
/// `t1` and over the final decade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktTrend {
    pub first_decade_eps: Option<f64>,
    pub first_decade_delta: Option<f64>,
    pub last_decade_eps: Option<f64>,
    pub last_decade_delta: Option<f64>,
    /// max/min of `kkt_delta * log(1/L~)` over the final decade.
    pub delta_log_ratio: Option<f64>,
}

/// Direction of the final iterate against the exact linear oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    /// Solution of the unweighted problem (`s = 1`).
    pub w_star: Vec<f64>,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub angle_deg: f64,
    /// Normalized margin `1 / ||w*||` of the unweighted solution.
    pub oracle_margin: f64,
    /// AdaGrad only: the problem weighted by `s = h_inf^{-1/2}`.
    pub weighted_w_star: Option<Vec<f64>>,
    pub weighted_angle_deg: Option<f64>,
    pub weighted_scaling: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub status: RunStatus,
    pub config_hash: String,
    pub dataset_hash: String,
    pub dataset: String,
    pub method: String,
    pub mode: String,
    pub loss: String,
    pub seed: u64,
    pub steps: u64,
    pub clock: f64,
    pub final_frame: DiagnosticsFrame,
    pub final_params: Vec<f64>,
    /// `q_min(w) / ||w||^L` in the original coordinates.
    #[serde(with = "crate::fmt::lenient_f64")]
    pub normalized_margin: f64,
    pub t1: Option<f64>,
    pub rate: RateReport,
    pub kkt_trend: KktTrend,
    pub final_kkt_constructive: Option<KktReport>,
    pub final_kkt_nnls: Option<KktReport>,
    pub oracle: Option<OracleComparison>,
    pub h_inf: Vec<f64>,
    pub final_conditioner: Vec<f64>,
    pub grad_sq_total: f64,
    pub grad_sq_tail_fraction: Option<f64>,
    pub integrals: RunningIntegrals,
    pub eta_halvings: u64,
    pub flow_rejections: u64,
    pub wall_clock_seconds: f64,
    pub invariants: InvariantMap,
}

impl RunSummary {
    pub fn failed_invariants(&self) -> Vec<&str> {
        self.invariants
            .iter()
            .filter(|(_, r)| r.failed())
            .map(|(k, _)| k.as_str())
            .collect()
    }
}
