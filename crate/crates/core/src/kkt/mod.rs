//! Approximate-KKT certification of trajectory endpoints for the max-margin
//! problems `min 1/2 ||s * w||^2  s.t.  q_i(w) >= 1`.

mod oracle;

pub use oracle::{svm_oracle, OracleSolution, ORACLE_MAX_DIM, ORACLE_MAX_POINTS};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::model::{margin_gradient, predict_margins, Dataset, ModelSpec, Objective};
use crate::optim::NormalizedView;

/// Feasibility slack accepted by [`KktReport::feasible`].
pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const NNLS_MAX_ITERS: usize = 10_000;
pub const NNLS_GRAD_TOL: f64 = 1e-12;

/// `min 1/2 ||s * w||^2` subject to `q_i(w) >= 1`. `s = 1` gives the plain
/// max-margin problem; `s = h_inf^{-1/2}` gives the AdaGrad-weighted one.
#[derive(Debug, Clone)]
pub struct MarginProblem<'a> {
    pub model: &'a ModelSpec,
    pub data: &'a Dataset,
    pub scaling: Vec<f64>,
}

impl<'a> MarginProblem<'a> {
    pub fn new(model: &'a ModelSpec, data: &'a Dataset, scaling: Vec<f64>) -> Result<Self> {
        if scaling.len() != model.param_count() {
            return Err(Error::Dimension { expected: model.param_count(), got: scaling.len() });
        }
        if let Some(s) = scaling.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::Config(format!("scaling must be componentwise positive, found {s}")));
        }
        Ok(MarginProblem { model, data, scaling })
    }

    pub fn unscaled(model: &'a ModelSpec, data: &'a Dataset) -> Self {
        MarginProblem { model, data, scaling: vec![1.0; model.param_count()] }
    }

    fn constraint_jacobian(&self, point: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..self.data.len())
            .map(|i| margin_gradient(self.model, point, self.data, i))
            .collect()
    }

    /// `s^2 * point`, the objective gradient.
    fn objective_gradient(&self, point: &[f64]) -> Vec<f64> {
        point.iter().zip(&self.scaling).map(|(p, s)| s * s * p).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiplierSource {
    Constructive,
    Nnls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub point: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub kkt_eps: f64,
    pub kkt_delta: f64,
    pub feasible: bool,
    pub multiplier_source: MultiplierSource,
}

/// `w / q_min(w)^{1/L}`, which has `q_min = 1`.
pub fn scale_to_boundary(w: &[f64], model: &ModelSpec, data: &Dataset) -> Result<Vec<f64>> {
    let q_min = predict_margins(model, w, data)?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if !(q_min > 0.0) {
        return Err(Error::NotSeparated(format!("q_min = {q_min} is not positive")));
    }
    let c = q_min.powf(-1.0 / model.degree() as f64);
    Ok(w.iter().map(|v| v * c).collect())
}

/// The constructive multipliers
/// `lambda_i = q_min^{1 - 2/L} ||v|| e^{-f(q_i)} f'(q_i) / ||dL~(v)||`,
/// evaluated with the per-sample weights rescaled by their maximum so the
/// ratio survives underflow of the loss.
pub fn constructive_lambdas(view: &NormalizedView, obj: &Objective) -> Result<Vec<f64>> {
    let q = view.margins(obj)?;
    let q_min = q.iter().copied().fold(f64::INFINITY, f64::min);
    if !(q_min > 0.0) {
        return Err(Error::NotSeparated(format!("q_min = {q_min} is not positive")));
    }
    let (grad, log_scale) = view.grad_tilde_scaled(obj)?;
    let grad_norm = norm(&grad);
    if !(grad_norm > 0.0) || !grad_norm.is_finite() {
        return Err(Error::Degenerate("loss gradient vanishes".into()));
    }
    let l = obj.degree() as f64;
    let lead = q_min.powf(1.0 - 2.0 / l) * norm(&view.v) / grad_norm;
    let lambdas: Vec<f64> = q
        .iter()
        .map(|&qi| lead * (obj.loss.log_weight(qi) - log_scale).exp())
        .collect();
    if lambdas.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("multipliers overflow at this scale".into()));
    }
    Ok(lambdas)
}

/// Residuals `(kkt_eps, kkt_delta)`: the stationarity norm
/// `||s^2 * p - sum_i lambda_i dq_i(p)||` and the complementarity slack
/// `max_i lambda_i (q_i(p) - 1)` (floored at zero).
pub fn kkt_residual(problem: &MarginProblem, point: &[f64], lambdas: &[f64]) -> Result<(f64, f64)> {
    if lambdas.len() != problem.data.len() {
        return Err(Error::Dimension { expected: problem.data.len(), got: lambdas.len() });
    }
    if let Some(bad) = lambdas.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::ContractViolation(format!("multiplier {bad} is negative")));
    }
    let q = predict_margins(problem.model, point, problem.data)?;
    let mut r = problem.objective_gradient(point);
    for (i, &lam) in lambdas.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        let g = margin_gradient(problem.model, point, problem.data, i)?;
        for (rj, gj) in r.iter_mut().zip(&g) {
            *rj -= lam * gj;
        }
    }
    let delta = lambdas
        .iter()
        .zip(&q)
        .map(|(l, qi)| l * (qi - 1.0))
        .fold(0.0, f64::max);
    Ok((norm(&r), delta))
}

pub fn is_feasible(problem: &MarginProblem, point: &[f64]) -> Result<bool> {
    let q = predict_margins(problem.model, point, problem.data)?;
    Ok(q.iter().all(|&qi| qi >= 1.0 - FEASIBILITY_TOL))
}

pub fn certify(
    problem: &MarginProblem,
    point: Vec<f64>,
    lambdas: Vec<f64>,
    source: MultiplierSource,
) -> Result<KktReport> {
    let (kkt_eps, kkt_delta) = kkt_residual(problem, &point, &lambdas)?;
    let feasible = is_feasible(problem, &point)?;
    Ok(KktReport { point, lambdas, kkt_eps, kkt_delta, feasible, multiplier_source: source })
}

/// Best-fit multipliers: minimizes `||s^2 * p - sum_i lambda_i dq_i(p)||^2`
/// over `lambda >= 0` by projected gradient with step `1 / lambda_max(J J^T)`.
///
/// A warm start never gets worse: each projected step with that step size
/// does not increase the objective.
pub fn nnls_lambdas(problem: &MarginProblem, point: &[f64], warm_start: Option<&[f64]>) -> Result<Vec<f64>> {
    let jac = problem.constraint_jacobian(point)?;
    let b = problem.objective_gradient(point);
    let n = jac.len();
    let gram = DMatrix::from_fn(n, n, |i, j| dot(&jac[i], &jac[j]));
    let jb: Vec<f64> = jac.iter().map(|row| dot(row, &b)).collect();
    let lip = SymmetricEigen::new(gram.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let mut lam = match warm_start {
        Some(w) if w.len() == n => w.iter().map(|x| x.max(0.0)).collect(),
        Some(w) => return Err(Error::Dimension { expected: n, got: w.len() }),
        None => vec![0.0; n],
    };
    if !(lip > 0.0) {
        return Ok(lam);
    }
    let step = 1.0 / lip;
    for _ in 0..NNLS_MAX_ITERS {
        // grad = G lam - J b
        let grad: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| gram[(i, j)] * lam[j]).sum::<f64>() - jb[i])
            .collect();
        let pg_norm = grad
            .iter()
            .zip(&lam)
            .map(|(g, l)| if *l > 0.0 { *g } else { g.min(0.0) })
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        if pg_norm < NNLS_GRAD_TOL {
            break;
        }
        for (l, g) in lam.iter_mut().zip(&grad) {
            *l = (*l - step * g).max(0.0);
        }
    }
    Ok(lam)
}

/// Angle between two nonzero vectors in degrees, in `[0, 180]`.
pub fn direction_angle(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension { expected: a.len(), got: b.len() });
    }
    let c = crate::linalg::cosine(a, b).ok_or_else(|| Error::Domain("direction of a zero vector".into()))?;
    Ok(c.acos().to_degrees())
}
