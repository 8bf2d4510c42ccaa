use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Method, Mode, OptimizerConfig};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, ParamVector};

/// Mutable state of one trajectory.
///
/// `m` is the conditioner accumulator: `h(t)^{-1} = sqrt(cond_eps + m)`.
/// The step-control fields (`dt`, `accept_streak`) and the checkpoint cursor
/// are kept so a saved state resumes bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerState {
    pub params: Vec<f64>,
    pub m: Vec<f64>,
    pub steps: u64,
    pub time: f64,
    /// Discrete: sum of `||dL||^2`; flow: integral of `||dL||^2 dt`.
    pub grad_sq_total: f64,
    pub dt: f64,
    pub accept_streak: u32,
    pub next_checkpoint: u32,
    pub eta_halvings: u64,
    pub rejections: u64,
}

pub const INITIAL_DT: f64 = 1e-3;

impl OptimizerState {
    pub fn new(params: ParamVector) -> Self {
        let p = params.len();
        OptimizerState {
            params: params.into_inner(),
            m: vec![0.0; p],
            steps: 0,
            time: 0.0,
            grad_sq_total: 0.0,
            dt: INITIAL_DT,
            accept_streak: 0,
            next_checkpoint: 0,
            eta_halvings: 0,
            rejections: 0,
        }
    }

    /// Gaussian initialization `N(0, init_scale^2)` from the config seed.
    pub fn init(model: &ModelSpec, cfg: &OptimizerConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, cfg.init_scale)
            .map_err(|e| Error::Config(format!("bad init_scale: {e}")))?;
        let w: Vec<f64> = (0..model.param_count()).map(|_| normal.sample(&mut rng)).collect();
        Ok(OptimizerState::new(ParamVector::new(w)?))
    }

    /// Step count (discrete) or flow time.
    pub fn clock(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Discrete => self.steps as f64,
            Mode::Flow => self.time,
        }
    }

    pub fn conditioner(&self, method: Method, cond_eps: f64) -> Vec<f64> {
        conditioner(method, cond_eps, &self.m)
    }

    /// Entries finite and `||w||` representable.
    pub fn is_finite(&self) -> bool {
        crate::linalg::all_finite(&self.params)
            && crate::linalg::all_finite(&self.m)
            && crate::linalg::norm(&self.params).is_finite()
    }

    pub fn validate_against(&self, model: &ModelSpec) -> Result<()> {
        model.check_params(&self.params)?;
        if self.m.len() != self.params.len() {
            return Err(Error::Dimension { expected: self.params.len(), got: self.m.len() });
        }
        if !self.is_finite() || self.m.iter().any(|&v| v < 0.0) {
            return Err(Error::Config("state has non-finite entries or negative accumulator".into()));
        }
        Ok(())
    }
}

/// `h = (cond_eps + m)^{-1/2}` for the adaptive methods and `1` for GD.
pub fn conditioner(method: Method, cond_eps: f64, m: &[f64]) -> Vec<f64> {
    match method {
        Method::Gd => vec![1.0; m.len()],
        Method::Adagrad | Method::Rmsprop => m.iter().map(|&v| 1.0 / (cond_eps + v).sqrt()).collect(),
    }
}

/// One emitted checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub w: Vec<f64>,
    pub m: Vec<f64>,
    pub grad_sq_total: f64,
}

impl Snapshot {
    pub fn of(state: &OptimizerState, mode: Mode) -> Self {
        Snapshot {
            t: state.clock(mode),
            w: state.params.clone(),
            m: state.m.clone(),
            grad_sq_total: state.grad_sq_total,
        }
    }
}
