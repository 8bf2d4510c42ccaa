use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{angles_from_gradient, gamma_prime, surrogate_margin, surrogate_norm, RunningIntegrals};
use crate::error::{Error, Result};
use crate::fmt::fmt_f64;
use crate::kkt::{kkt_residual, constructive_lambdas, scale_to_boundary, MarginProblem};
use crate::linalg::{norm, unit};
use crate::model::{loss_value, Objective};
use crate::optim::{normalize_view, NormalizedView, OptimizerConfig, Snapshot};

pub const CSV_COLUMNS: [&str; 19] = [
    "t",
    "loss",
    "log_inv_loss",
    "q_min",
    "norm_w",
    "norm_v",
    "rho",
    "rho_tilde",
    "nu",
    "gamma",
    "gamma_tilde",
    "gamma_prime",
    "cos_theta",
    "cos_theta_tilde",
    "zeta",
    "beta_max_dev",
    "kkt_eps",
    "kkt_delta",
    "valid_flag",
];

/// `q_min > 0` and `g(log 1/L~) > 0`: the surrogate values are untagged.
pub const FLAG_SEPARATED: u32 = 1;
pub const FLAG_POST_T1: u32 = 2;
/// `rho_tilde` comes from the running correction with a nonnegative radicand.
pub const FLAG_RHO_TILDE: u32 = 4;
/// `kkt_eps` and `kkt_delta` were computed (otherwise both are `-1`).
pub const FLAG_KKT: u32 = 8;
/// `v` and the gradient are nonzero, so the cosines are defined.
pub const FLAG_ANGLES: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct T1Thresholds {
    #[serde(default)]
    pub q_min: f64,
    #[serde(default = "default_beta_dev")]
    pub beta_dev: f64,
}

fn default_beta_dev() -> f64 {
    0.1
}

impl Default for T1Thresholds {
    fn default() -> Self {
        T1Thresholds { q_min: 0.0, beta_dev: default_beta_dev() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsFrame {
    #[serde(with = "crate::fmt::lenient_f64")]
    pub t: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub loss: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub log_inv_loss: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub q_min: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub norm_w: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub norm_v: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub rho: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub rho_tilde: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub nu: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub gamma: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub gamma_tilde: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub gamma_prime: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub cos_theta: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub cos_theta_tilde: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub zeta: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub beta_max_dev: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub kkt_eps: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub kkt_delta: f64,
    pub valid_flag: u32,
    /// `log ||dL~(v)||`, kept off the CSV; used by the rate fit.
    #[serde(with = "crate::fmt::lenient_f64")]
    pub log_grad_norm: f64,
}

impl DiagnosticsFrame {
    pub fn empty() -> Self {
        DiagnosticsFrame {
            t: 0.0,
            loss: 0.0,
            log_inv_loss: 0.0,
            q_min: 0.0,
            norm_w: 0.0,
            norm_v: 0.0,
            rho: 0.0,
            rho_tilde: 0.0,
            nu: 0.0,
            gamma: 0.0,
            gamma_tilde: 0.0,
            gamma_prime: 0.0,
            cos_theta: 0.0,
            cos_theta_tilde: 0.0,
            zeta: 0.0,
            beta_max_dev: 0.0,
            kkt_eps: -1.0,
            kkt_delta: -1.0,
            valid_flag: 0,
            log_grad_norm: f64::NEG_INFINITY,
        }
    }

    pub fn has(&self, flag: u32) -> bool {
        self.valid_flag & flag == flag
    }

    pub fn csv_row(&self) -> String {
        let vals = [
            self.t,
            self.loss,
            self.log_inv_loss,
            self.q_min,
            self.norm_w,
            self.norm_v,
            self.rho,
            self.rho_tilde,
            self.nu,
            self.gamma,
            self.gamma_tilde,
            self.gamma_prime,
            self.cos_theta,
            self.cos_theta_tilde,
            self.zeta,
            self.beta_max_dev,
            self.kkt_eps,
            self.kkt_delta,
        ];
        let mut row: Vec<String> = vals.iter().map(|v| fmt_f64(*v)).collect();
        row.push(self.valid_flag.to_string());
        row.join(",")
    }
}

pub fn write_csv<W: Write>(mut out: W, frames: &[DiagnosticsFrame]) -> std::io::Result<()> {
    writeln!(out, "{}", CSV_COLUMNS.join(","))?;
    for f in frames {
        writeln!(out, "{}", f.csv_row())?;
    }
    out.flush()
}

/// First frame with `q_min > thresholds.q_min`, `beta_max_dev <
/// thresholds.beta_dev`, and an untagged surrogate margin.
pub fn detect_t1(frames: &[DiagnosticsFrame], thresholds: &T1Thresholds) -> Option<usize> {
    frames.iter().position(|f| {
        f.q_min > thresholds.q_min && f.beta_max_dev < thresholds.beta_dev && f.has(FLAG_SEPARATED)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryAnalysis {
    pub frames: Vec<DiagnosticsFrame>,
    pub t1: Option<usize>,
    pub integrals: RunningIntegrals,
    pub h_inf: Vec<f64>,
}

impl TrajectoryAnalysis {
    pub fn t1_clock(&self) -> Option<f64> {
        self.t1.map(|i| self.frames[i].t)
    }
}

struct Pointwise {
    frame: DiagnosticsFrame,
    view: NormalizedView,
    dir: Option<Vec<f64>>,
}

fn pointwise(snap: &Snapshot, obj: &Objective, cfg: &OptimizerConfig, h_inf: &[f64]) -> Result<Pointwise> {
    let view = normalize_view(&snap.w, &snap.m, cfg, h_inf)?;
    let l = obj.degree();
    let q = obj.margins(&snap.w)?;
    let q_min = q.iter().copied().fold(f64::INFINITY, f64::min);
    let norm_v = norm(&view.v);
    let rho = surrogate_norm(&view);
    let mut f = DiagnosticsFrame {
        t: snap.t,
        loss: loss_value(obj.loss, &q),
        log_inv_loss: crate::model::log_inv_loss(obj.loss, &q),
        q_min,
        norm_w: norm(&snap.w),
        norm_v,
        rho,
        rho_tilde: rho,
        nu: q.iter().map(|&qi| obj.loss.weight(qi) * qi).sum(),
        gamma: q_min / norm_v.powi(l as i32),
        beta_max_dev: view.beta_max_dev(),
        ..DiagnosticsFrame::empty()
    };
    if rho > 0.0 {
        let s = surrogate_margin(&view, obj)?;
        f.gamma_tilde = s.value();
        if s.is_valid() && q_min > 0.0 {
            f.valid_flag |= FLAG_SEPARATED;
        }
        f.gamma_prime = gamma_prime(&view, obj)?.value();
    }
    let (grad, log_scale) = view.grad_tilde_scaled(obj)?;
    let gn = norm(&grad);
    f.log_grad_norm = if gn > 0.0 { gn.ln() + log_scale } else { f64::NEG_INFINITY };
    if let Ok((c, ct)) = angles_from_gradient(&view, &grad) {
        f.cos_theta = c;
        f.cos_theta_tilde = ct;
        f.valid_flag |= FLAG_ANGLES;
    }
    if q_min > 0.0 && gn > 0.0 {
        let scaling: Vec<f64> = view.h_inf.iter().map(|h| h.powf(-0.5)).collect();
        let problem = MarginProblem::new(obj.model, obj.data, scaling)?;
        let point = scale_to_boundary(&snap.w, obj.model, obj.data)?;
        if let Ok((eps, delta)) = constructive_lambdas(&view, obj).and_then(|l| kkt_residual(&problem, &point, &l)) {
            f.kkt_eps = eps;
            f.kkt_delta = delta;
            f.valid_flag |= FLAG_KKT;
        }
    }
    Ok(Pointwise { frame: f, dir: unit(&view.v), view })
}

/// Computes one frame per snapshot, detects `t1`, and accumulates the
/// running integrals from `t1` on. Before `t1`, `rho_tilde` is reported as
/// `rho`.
pub fn analyze_trajectory(
    snapshots: &[Snapshot],
    obj: &Objective,
    cfg: &OptimizerConfig,
    h_inf: &[f64],
    thresholds: &T1Thresholds,
) -> Result<TrajectoryAnalysis> {
    if snapshots.is_empty() {
        return Err(Error::Config("no checkpoints to analyze".into()));
    }
    let points: Vec<Pointwise> = snapshots
        .par_iter()
        .map(|s| pointwise(s, obj, cfg, h_inf))
        .collect::<Result<_>>()?;

    let mut zeta = 0.0;
    let mut frames: Vec<DiagnosticsFrame> = Vec::with_capacity(points.len());
    for (k, p) in points.iter().enumerate() {
        if k > 0 {
            if let (Some(a), Some(b)) = (&points[k - 1].dir, &p.dir) {
                zeta = super::curve_length_update(zeta, a, b);
            }
        }
        let mut f = p.frame.clone();
        f.zeta = zeta;
        frames.push(f);
    }

    let t1 = detect_t1(&frames, thresholds);
    let mut integrals = RunningIntegrals::default();
    if let Some(start) = t1 {
        for k in start..frames.len() {
            if k > start {
                integrals = integrals.rho_tilde_update(&points[k - 1].view, &points[k].view);
            }
            let f = &mut frames[k];
            f.valid_flag |= FLAG_POST_T1;
            if let Some(rt) = integrals.rho_tilde(f.rho) {
                f.rho_tilde = rt;
                f.valid_flag |= FLAG_RHO_TILDE;
            }
        }
    }
    integrals.zeta_accum = zeta;
    let h_inf = points[0].view.h_inf.clone();
    Ok(TrajectoryAnalysis { frames, t1, integrals, h_inf })
}
