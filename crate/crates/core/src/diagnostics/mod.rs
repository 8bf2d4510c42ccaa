//! Per-checkpoint analysis quantities along a trajectory.

mod frames;
mod rate;

pub use frames::{
    analyze_trajectory, write_csv, DiagnosticsFrame, T1Thresholds, TrajectoryAnalysis, CSV_COLUMNS,
    FLAG_ANGLES, FLAG_KKT, FLAG_POST_T1, FLAG_RHO_TILDE, FLAG_SEPARATED,
};
pub use rate::{rate_check, RateReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cosine, hadamard, norm, sub, unit};
use crate::model::{predict_margins, Dataset, ModelSpec, Objective};
use crate::optim::NormalizedView;

/// A surrogate quantity that is only meaningful once `log(1/L~) > 0`
/// (and, for the surrogate margin, `g(log 1/L~) > 0`). Earlier values are
/// still reported, tagged, so that output tables stay rectangular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "kebab-case")]
pub enum Tagged {
    Value(f64),
    PreSeparation(f64),
}

impl Tagged {
    pub fn value(self) -> f64 {
        match self {
            Tagged::Value(v) | Tagged::PreSeparation(v) => v,
        }
    }

    pub fn is_valid(self) -> bool {
        matches!(self, Tagged::Value(_))
    }
}

/// `gamma = q_min(w) / ||w||^L`.
pub fn normalized_margin(model: &ModelSpec, w: &[f64], data: &Dataset) -> Result<f64> {
    let n = norm(w);
    if !(n > 0.0) {
        return Err(Error::Domain("normalized margin of the zero vector".into()));
    }
    let q_min = predict_margins(model, w, data)?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(q_min / n.powi(model.degree() as i32))
}

/// `rho = ||beta^{-1/2} * v||`.
pub fn surrogate_norm(view: &NormalizedView) -> f64 {
    view.v
        .iter()
        .zip(&view.beta)
        .map(|(v, b)| v * v / b)
        .sum::<f64>()
        .sqrt()
}

/// `gamma~ = g(log 1/L~) / rho^L`.
pub fn surrogate_margin(view: &NormalizedView, obj: &Objective) -> Result<Tagged> {
    let rho = surrogate_norm(view);
    if !(rho > 0.0) {
        return Err(Error::Domain("surrogate margin at rho = 0".into()));
    }
    let x = view.log_inv_loss_tilde(obj)?;
    let denom = rho.powi(obj.degree() as i32);
    if x < 0.0 {
        // g is undefined there for the logistic loss; report the bare log-loss.
        return Ok(Tagged::PreSeparation(x / denom));
    }
    let value = obj.loss.g(x)? / denom;
    Ok(if value > 0.0 { Tagged::Value(value) } else { Tagged::PreSeparation(value) })
}

/// `nu = sum_i e^{-f(q_i)} f'(q_i) q_i`.
pub fn nu_value(view: &NormalizedView, obj: &Objective) -> Result<f64> {
    let q = view.margins(obj)?;
    Ok(q.iter().map(|&qi| obj.loss.weight(qi) * qi).sum())
}

/// `gamma~' = log(1/L~) / ||v||^{L/4}`.
pub fn gamma_prime(view: &NormalizedView, obj: &Objective) -> Result<Tagged> {
    let x = view.log_inv_loss_tilde(obj)?;
    let value = x / norm(&view.v).powf(obj.degree() as f64 / 4.0);
    Ok(if x > 0.0 { Tagged::Value(value) } else { Tagged::PreSeparation(value) })
}

/// `(cos theta, cos theta~)`: alignment of `v` with `-dL~(v)`, and of
/// `beta^{-1/2} * v` with `-beta^{1/2} * dL~(v)`.
pub fn angles(view: &NormalizedView, obj: &Objective) -> Result<(f64, f64)> {
    let (grad, _) = view.grad_tilde_scaled(obj)?;
    angles_from_gradient(view, &grad)
}

pub fn angles_from_gradient(view: &NormalizedView, grad: &[f64]) -> Result<(f64, f64)> {
    let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
    let zero = || Error::Domain("angle with a zero vector".into());
    let cos = cosine(&view.v, &neg).ok_or_else(zero)?;
    let bv: Vec<f64> = view.v.iter().zip(&view.beta).map(|(v, b)| v / b.sqrt()).collect();
    let bg: Vec<f64> = neg.iter().zip(&view.beta).map(|(g, b)| g * b.sqrt()).collect();
    let cos_tilde = cosine(&bv, &bg).ok_or_else(zero)?;
    Ok((cos, cos_tilde))
}

/// Adds the chord `||d_next - d_prev||` between consecutive unit directions.
pub fn curve_length_update(zeta: f64, prev_dir: &[f64], next_dir: &[f64]) -> f64 {
    zeta + norm(&sub(next_dir, prev_dir))
}

/// Running integrals over checkpoints after `t1`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningIntegrals {
    /// `int sum_j v_j^2 d(beta_j^{-1})`, so that `rho~^2 = rho^2 - correction`.
    pub rho_tilde_correction: f64,
    pub zeta_accum: f64,
    /// `int sum_j (d log beta_j^{-1/2})_+`.
    pub beta_log_pos_accum: f64,
}

impl RunningIntegrals {
    /// Trapezoidal step between consecutive views. The correction integrand
    /// `2 <v, beta^{-1/2} * d(beta^{-1/2})/dt * v>` is `v^2 d(beta^{-1})/dt`,
    /// integrated here as a Stieltjes sum against the increments of
    /// `beta^{-1}` so no time derivative of `beta` is needed.
    pub fn rho_tilde_update(self, prev: &NormalizedView, next: &NormalizedView) -> Self {
        let mut corr = 0.0;
        let mut pos = 0.0;
        for j in 0..prev.v.len() {
            let v2 = 0.5 * (prev.v[j] * prev.v[j] + next.v[j] * next.v[j]);
            corr += v2 * (1.0 / next.beta[j] - 1.0 / prev.beta[j]);
            pos += (-0.5 * (next.beta[j].ln() - prev.beta[j].ln())).max(0.0);
        }
        RunningIntegrals {
            rho_tilde_correction: self.rho_tilde_correction + corr,
            beta_log_pos_accum: self.beta_log_pos_accum + pos,
            ..self
        }
    }

    /// `rho~ = sqrt(rho^2 - correction)`, or `None` on a negative radicand.
    pub fn rho_tilde(&self, rho: f64) -> Option<f64> {
        let r = rho * rho - self.rho_tilde_correction;
        (r >= 0.0).then(|| r.sqrt())
    }
}

/// Largest margin `q~_i(u) = q_i(h_inf^{1/2} * u)` seen over `samples`
/// random unit vectors `u`.
pub fn sampled_margin_bound(
    model: &ModelSpec,
    data: &Dataset,
    sqrt_h_inf: &[f64],
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let p = model.param_count();
    if sqrt_h_inf.len() != p {
        return Err(Error::Dimension { expected: p, got: sqrt_h_inf.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..samples {
        let raw: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let Some(u) = unit(&raw) else { continue };
        let q = predict_margins(model, &hadamard(sqrt_h_inf, &u), data)?;
        best = q.into_iter().fold(best, f64::max);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LossSpec, ModelKind};
    use crate::optim::{normalize_view, Method, Mode, OptimizerConfig};

    fn gd_view(w: &[f64]) -> NormalizedView {
        let cfg = OptimizerConfig::new(Method::Gd, Mode::Flow);
        normalize_view(w, &vec![0.0; w.len()], &cfg, &vec![1.0; w.len()]).unwrap()
    }

    fn view_with_beta(v: &[f64], beta: &[f64]) -> NormalizedView {
        let mut view = gd_view(v);
        view.beta = beta.to_vec();
        view
    }

    #[test]
    fn normalized_margin_examples() {
        let m = ModelSpec::linear(2);
        let d = Dataset::new(vec![vec![1.0, 0.0]], vec![1.0]).unwrap();
        assert!((normalized_margin(&m, &[3.0, 4.0], &d).unwrap() - 0.6).abs() < 1e-15);
        let d2 = Dataset::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 1.0]).unwrap();
        let g = normalized_margin(&m, &[1.0, 1.0], &d2).unwrap();
        assert!((g - 0.7071067811865475).abs() < 1e-15);
        assert!(normalized_margin(&m, &[0.0, 0.0], &d).is_err());

        let deep = ModelSpec::new(ModelKind::DeepLinear { depth: 2, width: 2 }, 2).unwrap();
        let w = [0.3, -0.2, 0.5, 0.9, 1.1, -0.4];
        let w2: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
        let a = normalized_margin(&deep, &w, &d2).unwrap();
        let b = normalized_margin(&deep, &w2, &d2).unwrap();
        assert!((a - b).abs() < 1e-14 * a.abs().max(1.0));
    }

    #[test]
    fn surrogate_margin_examples() {
        let m = ModelSpec::linear(1);
        let l = LossSpec::exponential();
        let d = Dataset::new(vec![vec![1.0]], vec![1.0]).unwrap();
        let obj = Objective::new(&m, &l, &d).unwrap();
        let s = surrogate_margin(&gd_view(&[10.0]), &obj).unwrap();
        assert!((s.value() - 1.0).abs() < 1e-15 && s.is_valid());

        let d2 = Dataset::new(vec![vec![1.0], vec![1.0]], vec![1.0, 1.0]).unwrap();
        let obj2 = Objective::new(&m, &l, &d2).unwrap();
        let s2 = surrogate_margin(&gd_view(&[10.0]), &obj2).unwrap();
        assert!((s2.value() - 0.930685281944).abs() < 1e-12);

        // log(1/L) < 0 before separation.
        let s3 = surrogate_margin(&gd_view(&[-1.0]), &obj2).unwrap();
        assert!(!s3.is_valid());
    }

    #[test]
    fn surrogate_below_normalized_margin_at_unit_beta() {
        let m = ModelSpec::linear(2);
        let d = Dataset::new(
            vec![vec![1.0, 0.2], vec![0.5, 1.0], vec![2.0, -0.3]],
            vec![1.0, 1.0, 1.0],
        )
        .unwrap();
        for loss in [LossSpec::exponential(), LossSpec::logistic()] {
            let obj = Objective::new(&m, &loss, &d).unwrap();
            for w in [[3.0, 2.0], [10.0, 1.0], [40.0, 30.0]] {
                let view = gd_view(&w);
                let gt = surrogate_margin(&view, &obj).unwrap().value();
                let g = normalized_margin(&m, &w, &d).unwrap();
                assert!(gt <= g + 1e-15, "{gt} > {g}");
            }
        }
    }

    #[test]
    fn nu_examples() {
        let m = ModelSpec::linear(1);
        let l = LossSpec::exponential();
        let d = Dataset::new(vec![vec![1.0]], vec![1.0]).unwrap();
        let obj = Objective::new(&m, &l, &d).unwrap();
        assert!((nu_value(&gd_view(&[1.0]), &obj).unwrap() - (-1f64).exp()).abs() < 1e-16);
        assert_eq!(nu_value(&gd_view(&[0.0]), &obj).unwrap(), 0.0);
    }

    #[test]
    fn gamma_prime_example() {
        let m = ModelSpec::linear(1);
        let l = LossSpec::exponential();
        let d = Dataset::new(vec![vec![1.0]], vec![1.0]).unwrap();
        let obj = Objective::new(&m, &l, &d).unwrap();
        let g = gamma_prime(&gd_view(&[4.0]), &obj).unwrap();
        assert!((g.value() - 2.8284271247461903).abs() < 1e-14);
        let g2 = gamma_prime(&gd_view(&[8.0]), &obj).unwrap();
        assert!(g2.value() > g.value());
    }

    #[test]
    fn angle_examples() {
        let view = gd_view(&[1.0, 0.0]);
        let (c, ct) = angles_from_gradient(&view, &[0.0, -1.0]).unwrap();
        assert_eq!(c, 0.0);
        assert_eq!(ct, c);

        let m = ModelSpec::linear(1);
        let l = LossSpec::logistic();
        let d = Dataset::new(vec![vec![1.0], vec![2.0]], vec![1.0, 1.0]).unwrap();
        let obj = Objective::new(&m, &l, &d).unwrap();
        let (c1, _) = angles(&gd_view(&[3.0]), &obj).unwrap();
        assert_eq!(c1, 1.0);
        assert!(angles_from_gradient(&view, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn chords() {
        assert_eq!(curve_length_update(0.5, &[1.0, 0.0], &[1.0, 0.0]), 0.5);
        let z = curve_length_update(0.0, &[1.0, 0.0], &[0.0, 1.0]);
        assert!((z - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_beta_leaves_rho_untouched() {
        let a = view_with_beta(&[1.0, 2.0], &[0.5, 2.0]);
        let b = view_with_beta(&[3.0, 5.0], &[0.5, 2.0]);
        let r = RunningIntegrals::default().rho_tilde_update(&a, &b);
        assert_eq!(r.rho_tilde_correction, 0.0);
        assert_eq!(r.beta_log_pos_accum, 0.0);
        assert_eq!(r.rho_tilde(surrogate_norm(&b)), Some(surrogate_norm(&b)));
    }

    #[test]
    fn decreasing_beta_from_above() {
        // beta shrinking towards 1 from above, as for AdaGrad with terminal h_inf.
        let a = view_with_beta(&[1.0, 1.0], &[2.0, 1.5]);
        let b = view_with_beta(&[1.0, 1.0], &[1.5, 1.2]);
        let r = RunningIntegrals::default().rho_tilde_update(&a, &b);
        assert!(r.rho_tilde_correction > 0.0);
        assert!(r.beta_log_pos_accum > 0.0);
        let rho = surrogate_norm(&b);
        assert!(r.rho_tilde(rho).unwrap() < rho);
    }

    #[test]
    fn negative_radicand_is_reported() {
        let r = RunningIntegrals { rho_tilde_correction: 5.0, ..Default::default() };
        assert_eq!(r.rho_tilde(2.0), None);
    }

    #[test]
    fn margin_bound_for_linear_model() {
        let m = ModelSpec::linear(2);
        let d = Dataset::new(vec![vec![3.0, 4.0]], vec![1.0]).unwrap();
        let b = sampled_margin_bound(&m, &d, &[1.0, 1.0], 10_000, 7).unwrap();
        assert!(b <= 5.0 + 1e-12 && b > 4.99);
    }
}
