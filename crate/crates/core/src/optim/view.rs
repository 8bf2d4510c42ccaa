use super::{conditioner, Method, OptimizerConfig};
use crate::error::{Error, Result};
use crate::linalg::hadamard;
use crate::model::{loss_gradient_scaled, Objective};

/// Parameters in adaptive-gradient-flow coordinates.
///
/// `v = h_inf^{-1/2} * w`, `beta = h(t) / h_inf`, and the normalized loss is
/// `L~(v) = L(h_inf^{1/2} * v)`, so `L~(v) = L(w)` and
/// `dL~(v) = h_inf^{1/2} * dL(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedView {
    pub v: Vec<f64>,
    pub beta: Vec<f64>,
    pub h_inf: Vec<f64>,
    sqrt_h_inf: Vec<f64>,
}

impl NormalizedView {
    /// The original parameters `w = h_inf^{1/2} * v`.
    pub fn w(&self) -> Vec<f64> {
        hadamard(&self.sqrt_h_inf, &self.v)
    }

    pub fn sqrt_h_inf(&self) -> &[f64] {
        &self.sqrt_h_inf
    }

    pub fn loss_tilde(&self, obj: &Objective) -> Result<f64> {
        obj.loss(&self.w())
    }

    pub fn log_inv_loss_tilde(&self, obj: &Objective) -> Result<f64> {
        obj.log_inv_loss(&self.w())
    }

    /// `q~_i(v) = q_i(w)`.
    pub fn margins(&self, obj: &Objective) -> Result<Vec<f64>> {
        obj.margins(&self.w())
    }

    pub fn grad_tilde(&self, obj: &Objective) -> Result<Vec<f64>> {
        Ok(hadamard(&self.sqrt_h_inf, &obj.gradient(&self.w())?))
    }

    /// `dL~(v)` divided by `exp(log_scale)`; see [`loss_gradient_scaled`].
    pub fn grad_tilde_scaled(&self, obj: &Objective) -> Result<(Vec<f64>, f64)> {
        let (g, log_scale) = loss_gradient_scaled(obj.loss, obj.model, &self.w(), obj.data)?;
        Ok((hadamard(&self.sqrt_h_inf, &g), log_scale))
    }

    /// `max_j |beta_j - 1|`.
    pub fn beta_max_dev(&self) -> f64 {
        self.beta.iter().map(|b| (b - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// The `h_inf` used by the transform: `1` for GD, `cond_eps^{-1/2}` for
/// RMSProp, and the supplied terminal estimate for AdaGrad.
pub fn resolve_h_inf(cfg: &OptimizerConfig, p: usize, estimate: Option<&[f64]>) -> Result<Vec<f64>> {
    match cfg.method {
        Method::Rmsprop => Ok(vec![cfg.cond_eps.powf(-0.5); p]),
        Method::Gd => Ok(estimate.map(|e| e.to_vec()).unwrap_or_else(|| vec![1.0; p])),
        Method::Adagrad => estimate
            .map(|e| e.to_vec())
            .ok_or_else(|| Error::Config("AdaGrad normalization needs an h_inf estimate".into())),
    }
}

/// Builds the normalized view of `(w, m)`. For RMSProp the fixed
/// `h_inf = cond_eps^{-1/2}` replaces `h_inf_estimate`.
pub fn normalize_view(
    w: &[f64],
    m: &[f64],
    cfg: &OptimizerConfig,
    h_inf_estimate: &[f64],
) -> Result<NormalizedView> {
    if w.len() != m.len() || w.len() != h_inf_estimate.len() {
        return Err(Error::Dimension { expected: w.len(), got: h_inf_estimate.len() });
    }
    let h_inf = resolve_h_inf(cfg, w.len(), Some(h_inf_estimate))?;
    if let Some(bad) = h_inf.iter().find(|h| !(**h > 0.0) || !h.is_finite()) {
        return Err(Error::Config(format!("h_inf must be componentwise positive, found {bad}")));
    }
    let sqrt_h_inf: Vec<f64> = h_inf.iter().map(|h| h.sqrt()).collect();
    let v = w.iter().zip(&sqrt_h_inf).map(|(wi, s)| wi / s).collect();
    let h = conditioner(cfg.method, cfg.cond_eps, m);
    let beta = h.iter().zip(&h_inf).map(|(ht, hi)| ht / hi).collect();
    Ok(NormalizedView { v, beta, h_inf, sqrt_h_inf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::Mode;

    #[test]
    fn unit_h_inf_is_identity() {
        let cfg = OptimizerConfig::new(Method::Adagrad, Mode::Flow);
        let m = [3.0, 0.5];
        let view = normalize_view(&[1.5, -2.0], &m, &cfg, &[1.0, 1.0]).unwrap();
        assert_eq!(view.v, vec![1.5, -2.0]);
        assert_eq!(view.beta, conditioner(Method::Adagrad, cfg.cond_eps, &m));
    }

    #[test]
    fn rmsprop_unit_eps_is_identity() {
        let mut cfg = OptimizerConfig::new(Method::Rmsprop, Mode::Flow);
        cfg.cond_eps = 1.0;
        let m = [0.25];
        let view = normalize_view(&[4.0], &m, &cfg, &[123.0]).unwrap();
        assert_eq!(view.v, vec![4.0]);
        assert_eq!(view.beta, vec![1.0 / 1.25f64.sqrt()]);
    }

    #[test]
    fn adagrad_scaling() {
        let cfg = OptimizerConfig::new(Method::Adagrad, Mode::Flow);
        let view = normalize_view(&[3.0], &[0.0], &cfg, &[0.25]).unwrap();
        assert_eq!(view.v, vec![6.0]);
        assert_eq!(view.w(), vec![3.0]);
    }

    #[test]
    fn nonpositive_h_inf_rejected() {
        let cfg = OptimizerConfig::new(Method::Adagrad, Mode::Flow);
        assert!(normalize_view(&[3.0], &[0.0], &cfg, &[0.0]).is_err());
        assert!(normalize_view(&[3.0], &[0.0], &cfg, &[-1.0]).is_err());
    }
}
