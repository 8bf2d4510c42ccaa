use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Individual loss `l(q) = exp(-f(q))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `f(q) = q`.
    Exponential,
    /// `f(q) = -log log(1 + e^{-q})`, so that `l(q) = log(1 + e^{-q})`.
    Logistic,
}

/// Above this argument the logistic inverse uses `g(x) = x - e^{-x}/2`.
pub const LOGISTIC_G_ASYMPTOTE: f64 = 20.0;

/// Above this margin the logistic `f` and `f'` use first-order expansions in `e^{-q}`.
const LOGISTIC_F_ASYMPTOTE: f64 = 30.0;

/// Loss family evaluators `(f, f', g = f^{-1}, g')`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `1 / (1 + e^{q})` without overflow.
fn sigmoid_neg(q: f64) -> f64 {
    if q >= 0.0 {
        let e = (-q).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + q.exp())
    }
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        LossSpec { kind }
    }

    pub fn exponential() -> Self {
        LossSpec::new(LossKind::Exponential)
    }

    pub fn logistic() -> Self {
        LossSpec::new(LossKind::Logistic)
    }

    pub fn f(&self, q: f64) -> f64 {
        match self.kind {
            LossKind::Exponential => q,
            LossKind::Logistic => {
                if q > LOGISTIC_F_ASYMPTOTE {
                    // log(log1p(u)/u) = -u/2 + O(u^2)
                    q + 0.5 * (-q).exp()
                } else {
                    -softplus(-q).ln()
                }
            }
        }
    }

    pub fn f_prime(&self, q: f64) -> f64 {
        match self.kind {
            LossKind::Exponential => 1.0,
            LossKind::Logistic => {
                if q > LOGISTIC_F_ASYMPTOTE {
                    1.0 - 0.5 * (-q).exp()
                } else {
                    sigmoid_neg(q) / softplus(-q)
                }
            }
        }
    }

    /// `l(q) = e^{-f(q)}`.
    pub fn ell(&self, q: f64) -> f64 {
        match self.kind {
            LossKind::Exponential => (-q).exp(),
            LossKind::Logistic => softplus(-q),
        }
    }

    /// `log(e^{-f(q)} f'(q))`, the log of the per-sample gradient weight.
    pub fn log_weight(&self, q: f64) -> f64 {
        match self.kind {
            LossKind::Exponential => -q,
            LossKind::Logistic => -softplus(q),
        }
    }

    /// `e^{-f(q)} f'(q)`, i.e. `-l'(q)`.
    pub fn weight(&self, q: f64) -> f64 {
        match self.kind {
            LossKind::Exponential => (-q).exp(),
            LossKind::Logistic => sigmoid_neg(q),
        }
    }

    /// `g = f^{-1}`.
    pub fn g(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(Error::Domain("g evaluated at NaN".into()));
        }
        match self.kind {
            LossKind::Exponential => Ok(x),
            LossKind::Logistic => logistic_g(x),
        }
    }

    pub fn g_prime(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(Error::Domain("g' evaluated at NaN".into()));
        }
        match self.kind {
            LossKind::Exponential => Ok(1.0),
            LossKind::Logistic => {
                let y = (-x).exp();
                if !y.is_finite() {
                    return Err(Error::Domain(format!("g' argument {x} below representable range")));
                }
                if y == 0.0 {
                    return Ok(1.0);
                }
                // d/dx [-log(expm1(e^{-x}))] = y / (1 - e^{-y})
                Ok(y / -(-y).exp_m1())
            }
        }
    }
}

fn logistic_g(x: f64) -> Result<f64> {
    if x > LOGISTIC_G_ASYMPTOTE {
        return Ok(x - 0.5 * (-x).exp());
    }
    let y = (-x).exp();
    if !y.is_finite() {
        return Err(Error::Domain(format!("g argument {x} below representable range")));
    }
    if y > 36.0 {
        // log(e^y - 1) = y + log1p(-e^{-y})
        Ok(-(y + (-(-y).exp()).ln_1p()))
    } else {
        Ok(-y.exp_m1().ln())
    }
}
