//! Homogeneous predictors, margins, losses and their exact gradients.

mod dataset;
mod loss;
mod network;

pub use dataset::Dataset;
pub use loss::{LossKind, LossSpec, LOGISTIC_G_ASYMPTOTE};
pub use network::{ModelKind, ModelSpec, ParamVector};

use crate::error::{Error, Result};
use crate::linalg::{dot, log_sum_exp};

fn check_dims(model: &ModelSpec, w: &[f64], data: &Dataset) -> Result<()> {
    if model.input_dim != data.dim() {
        return Err(Error::Dimension { expected: model.input_dim, got: data.dim() });
    }
    model.check_params(w)
}

/// `q_i = y_i Phi(w, x_i)` for every point, in dataset order.
pub fn predict_margins(model: &ModelSpec, w: &[f64], data: &Dataset) -> Result<Vec<f64>> {
    check_dims(model, w, data)?;
    Ok(data.iter().map(|(x, y)| y * model.output(w, x)).collect())
}

/// A subgradient of `q_i` at `w`.
pub fn margin_gradient(model: &ModelSpec, w: &[f64], data: &Dataset, i: usize) -> Result<Vec<f64>> {
    check_dims(model, w, data)?;
    if i >= data.len() {
        return Err(Error::Dimension { expected: data.len(), got: i });
    }
    let mut g = vec![0.0; w.len()];
    model.output_grad(w, data.x(i), &mut g);
    let y = data.y(i);
    g.iter_mut().for_each(|v| *v *= y);
    Ok(g)
}

/// `sum_i e^{-f(q_i)}`.
pub fn loss_value(loss: &LossSpec, margins: &[f64]) -> f64 {
    margins.iter().map(|&q| loss.ell(q)).sum()
}

/// `log(1/L)` computed as `-logsumexp(-f(q_i))`, finite even when `L` underflows.
pub fn log_inv_loss(loss: &LossSpec, margins: &[f64]) -> f64 {
    let neg_f: Vec<f64> = margins.iter().map(|&q| -loss.f(q)).collect();
    -log_sum_exp(&neg_f)
}

/// `-sum_i e^{-f(q_i)} f'(q_i) dq_i(w)`.
pub fn loss_gradient(loss: &LossSpec, model: &ModelSpec, w: &[f64], data: &Dataset) -> Result<Vec<f64>> {
    check_dims(model, w, data)?;
    let mut grad = vec![0.0; w.len()];
    let mut scratch = vec![0.0; w.len()];
    for (x, y) in data.iter() {
        let q = y * model.output(w, x);
        let c = loss.weight(q);
        if c == 0.0 {
            continue;
        }
        model.output_grad(w, x, &mut scratch);
        for (g, s) in grad.iter_mut().zip(&scratch) {
            *g -= c * y * s;
        }
    }
    Ok(grad)
}

/// Loss gradient divided by the largest per-sample weight, plus the log of
/// that weight. The direction survives even when the gradient itself
/// underflows.
pub fn loss_gradient_scaled(
    loss: &LossSpec,
    model: &ModelSpec,
    w: &[f64],
    data: &Dataset,
) -> Result<(Vec<f64>, f64)> {
    let margins = predict_margins(model, w, data)?;
    let log_w: Vec<f64> = margins.iter().map(|&q| loss.log_weight(q)).collect();
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut grad = vec![0.0; w.len()];
    let mut scratch = vec![0.0; w.len()];
    for (i, (x, y)) in data.iter().enumerate() {
        let c = (log_w[i] - top).exp();
        if c == 0.0 {
            continue;
        }
        model.output_grad(w, x, &mut scratch);
        for (g, s) in grad.iter_mut().zip(&scratch) {
            *g -= c * y * s;
        }
    }
    Ok((grad, top))
}

/// `f^{-1}(x)`.
pub fn g_eval(loss: &LossSpec, x: f64) -> Result<f64> {
    loss.g(x)
}

/// `max_i |<dq_i(w), w> - L q_i(w)| / (1 + |q_i(w)|)`.
pub fn euler_identity_residual(model: &ModelSpec, w: &[f64], data: &Dataset) -> Result<f64> {
    check_dims(model, w, data)?;
    let l = model.degree() as f64;
    let mut worst: f64 = 0.0;
    for i in 0..data.len() {
        let q = data.y(i) * model.output(w, data.x(i));
        let g = margin_gradient(model, w, data, i)?;
        worst = worst.max((dot(&g, w) - l * q).abs() / (1.0 + q.abs()));
    }
    Ok(worst)
}

/// `max_i |q_i(a w) - a^L q_i(w)| / (1 + a^L |q_i(w)|)`.
pub fn check_homogeneity(model: &ModelSpec, w: &[f64], data: &Dataset, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("homogeneity scale must be positive, got {alpha}")));
    }
    let base = predict_margins(model, w, data)?;
    let scaled_w: Vec<f64> = w.iter().map(|v| v * alpha).collect();
    let scaled = predict_margins(model, &scaled_w, data)?;
    let al = alpha.powi(model.degree() as i32);
    Ok(base
        .iter()
        .zip(&scaled)
        .map(|(q, qa)| (qa - al * q).abs() / (1.0 + al * q.abs()))
        .fold(0.0, f64::max))
}

/// Borrowed bundle of the three ingredients every loss evaluation needs.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub model: &'a ModelSpec,
    pub loss: &'a LossSpec,
    pub data: &'a Dataset,
}

impl<'a> Objective<'a> {
    pub fn new(model: &'a ModelSpec, loss: &'a LossSpec, data: &'a Dataset) -> Result<Self> {
        if model.input_dim != data.dim() {
            return Err(Error::Dimension { expected: model.input_dim, got: data.dim() });
        }
        Ok(Objective { model, loss, data })
    }

    pub fn margins(&self, w: &[f64]) -> Result<Vec<f64>> {
        predict_margins(self.model, w, self.data)
    }

    pub fn loss(&self, w: &[f64]) -> Result<f64> {
        Ok(loss_value(self.loss, &self.margins(w)?))
    }

    pub fn log_inv_loss(&self, w: &[f64]) -> Result<f64> {
        Ok(log_inv_loss(self.loss, &self.margins(w)?))
    }

    pub fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        loss_gradient(self.loss, self.model, w, self.data)
    }

    pub fn degree(&self) -> u32 {
        self.model.degree()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_point(x: Vec<f64>, y: f64) -> Dataset {
        Dataset::new(vec![x], vec![y]).unwrap()
    }

    #[test]
    fn margins_examples() {
        let lin = ModelSpec::linear(2);
        let d = one_point(vec![1.0, 0.0], 1.0);
        assert_eq!(predict_margins(&lin, &[1.0, 0.0], &d).unwrap(), vec![1.0]);

        let deep = ModelSpec::new(ModelKind::DeepLinear { depth: 2, width: 1 }, 1).unwrap();
        let d1 = one_point(vec![1.0], 1.0);
        assert_eq!(deep.param_count(), 2);
        assert_eq!(predict_margins(&deep, &[2.0, 3.0], &d1).unwrap(), vec![6.0]);

        let relu = ModelSpec::new(ModelKind::TwoLayerRelu { width: 2 }, 2).unwrap();
        let d2 = one_point(vec![1.0, 1.0], 1.0);
        let w = [1.0, -1.0, 1.0, 0.0, 0.0, 1.0];
        assert_eq!(predict_margins(&relu, &w, &d2).unwrap(), vec![0.0]);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let lin = ModelSpec::linear(2);
        let d = one_point(vec![1.0, 0.0], 1.0);
        let err = predict_margins(&lin, &[1.0], &d).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn gradient_examples() {
        let deep = ModelSpec::new(ModelKind::DeepLinear { depth: 2, width: 1 }, 1).unwrap();
        let d1 = one_point(vec![1.0], 1.0);
        assert_eq!(margin_gradient(&deep, &[2.0, 3.0], &d1, 0).unwrap(), vec![3.0, 2.0]);

        let lin = ModelSpec::linear(2);
        let d = one_point(vec![1.0, 2.0], -1.0);
        assert_eq!(margin_gradient(&lin, &[0.3, -7.0], &d, 0).unwrap(), vec![-1.0, -2.0]);

        // u_1 . x = 0 sits on the kink: relu'(0) = 0 and relu(0) = 0.
        let relu = ModelSpec::new(ModelKind::TwoLayerRelu { width: 1 }, 2).unwrap();
        let dk = one_point(vec![1.0, 1.0], 1.0);
        assert_eq!(margin_gradient(&relu, &[2.0, 1.0, -1.0], &dk, 0).unwrap(), vec![0.0, 0.0, 0.0]);
        assert!(margin_gradient(&relu, &[2.0, 1.0, -1.0], &dk, 1).is_err());
    }

    #[test]
    fn loss_examples() {
        let e = LossSpec::exponential();
        assert_eq!(loss_value(&e, &[0.0, 0.0]), 2.0);
        assert!((loss_value(&e, &[1.0, 2.0]) - 0.503214724408055).abs() < 1e-12);
        assert!((loss_value(&LossSpec::logistic(), &[0.0]) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn loss_gradient_examples() {
        let e = LossSpec::exponential();
        let lin = ModelSpec::linear(2);
        let d = one_point(vec![1.0, 0.0], 1.0);
        assert_eq!(loss_gradient(&e, &lin, &[0.0, 0.0], &d).unwrap(), vec![-1.0, 0.0]);
        let g = loss_gradient(&e, &lin, &[100.0, 0.0], &d).unwrap();
        assert!(crate::linalg::norm(&g) <= 1e-40 * d.max_norm());
    }

    #[test]
    fn scaled_gradient_keeps_direction_past_underflow() {
        let e = LossSpec::exponential();
        let lin = ModelSpec::linear(2);
        let d = Dataset::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 1.0]).unwrap();
        let w = [900.0, 901.0];
        assert_eq!(crate::linalg::norm(&loss_gradient(&e, &lin, &w, &d).unwrap()), 0.0);
        let (g, top) = loss_gradient_scaled(&e, &lin, &w, &d).unwrap();
        assert_eq!(top, -900.0);
        assert!((g[0] + 1.0).abs() < 1e-15 && (g[1] + (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn euler_and_homogeneity_examples() {
        let deep = ModelSpec::new(ModelKind::DeepLinear { depth: 2, width: 1 }, 1).unwrap();
        let d1 = one_point(vec![1.0], 1.0);
        assert_eq!(euler_identity_residual(&deep, &[2.0, 3.0], &d1).unwrap(), 0.0);
        assert_eq!(check_homogeneity(&deep, &[2.0, 3.0], &d1, 3.0).unwrap(), 0.0);
        assert_eq!(check_homogeneity(&deep, &[2.0, 3.0], &d1, 1.0).unwrap(), 0.0);
        assert!(check_homogeneity(&deep, &[2.0, 3.0], &d1, 0.0).is_err());
    }

    #[test]
    fn log_inv_loss_survives_underflow() {
        let e = LossSpec::exponential();
        let l = log_inv_loss(&e, &[1000.0, 1000.0]);
        assert!((l - (1000.0 - std::f64::consts::LN_2)).abs() < 1e-9);
        assert_eq!(loss_value(&e, &[1000.0]), 0.0);
    }

    #[test]
    fn deep_linear_general_shape() {
        let m = ModelSpec::new(ModelKind::DeepLinear { depth: 3, width: 2 }, 2).unwrap();
        assert_eq!(m.param_count(), 2 * 2 + 2 * 2 + 2);
        // W1 = I, W2 = [[1,2],[0,1]], W3 = [1,1]; x = (1, 1) -> W2 x = (3, 1) -> 4
        let w = [1.0, 0.0, 0.0, 1.0, 1.0, 2.0, 0.0, 1.0, 1.0, 1.0];
        let d = one_point(vec![1.0, 1.0], 1.0);
        assert_eq!(predict_margins(&m, &w, &d).unwrap(), vec![4.0]);
        assert_eq!(m.degree(), 3);
        assert!(euler_identity_residual(&m, &w, &d).unwrap() < 1e-14);
    }
}
