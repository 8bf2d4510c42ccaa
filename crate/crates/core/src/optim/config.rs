use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gd,
    Adagrad,
    Rmsprop,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Gd, Method::Adagrad, Method::Rmsprop];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Adagrad => "adagrad",
            Method::Rmsprop => "rmsprop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Discrete,
    Flow,
}

fn default_eta() -> f64 {
    0.05
}
fn default_cond_eps() -> f64 {
    1e-3
}
fn default_decay_b() -> f64 {
    0.99
}
fn default_max_steps() -> u64 {
    100_000
}
fn default_max_flow_time() -> f64 {
    1e60
}
fn default_flow_tol() -> f64 {
    0.02
}
fn default_init_scale() -> f64 {
    0.5
}
fn default_seed() -> u64 {
    0x5eed_0001
}

/// Hyperparameters of one trajectory.
///
/// `cond_eps` is the conditioner constant inside `h(t)^{-1} = sqrt(cond_eps + m)`;
/// it is unrelated to the KKT tolerance `kkt_eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: Method,
    pub mode: Mode,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_cond_eps")]
    pub cond_eps: f64,
    #[serde(default = "default_decay_b")]
    pub decay_b: f64,
    /// Discrete steps, or accepted integrator steps in flow mode.
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default = "default_max_flow_time")]
    pub max_flow_time: f64,
    /// Largest relative change of the flow vector field accepted across one step.
    #[serde(default = "default_flow_tol")]
    pub flow_tol: f64,
    /// Standard deviation of the Gaussian initialization.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn new(method: Method, mode: Mode) -> Self {
        OptimizerConfig {
            method,
            mode,
            eta: default_eta(),
            cond_eps: default_cond_eps(),
            decay_b: default_decay_b(),
            max_steps: default_max_steps(),
            max_flow_time: default_max_flow_time(),
            flow_tol: default_flow_tol(),
            init_scale: default_init_scale(),
            seed: default_seed(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("optimizer.{name} must be positive and finite, got {v}")))
            }
        };
        pos("eta", self.eta)?;
        pos("cond_eps", self.cond_eps)?;
        pos("max_flow_time", self.max_flow_time)?;
        pos("flow_tol", self.flow_tol)?;
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!("optimizer.init_scale must be >= 0, got {}", self.init_scale)));
        }
        if !(self.decay_b > 0.0 && self.decay_b < 1.0) {
            return Err(Error::Config(format!("optimizer.decay_b must lie in (0, 1), got {}", self.decay_b)));
        }
        if self.flow_tol >= 1.0 {
            return Err(Error::Config("optimizer.flow_tol must be < 1".into()));
        }
        Ok(())
    }
}

/// Geometric checkpoint times `first * ratio^k`, preceded by the initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointSchedule {
    pub ratio: f64,
    pub first: f64,
}

impl CheckpointSchedule {
    pub fn new(ratio: f64, first: f64) -> Result<Self> {
        if !(ratio > 1.0 && ratio.is_finite()) {
            return Err(Error::Config(format!("checkpoint ratio must exceed 1, got {ratio}")));
        }
        if !(first > 0.0 && first.is_finite()) {
            return Err(Error::Config(format!("first checkpoint must be positive, got {first}")));
        }
        Ok(CheckpointSchedule { ratio, first })
    }

    pub fn time(&self, k: u32) -> f64 {
        self.first * self.ratio.powi(k as i32)
    }

    /// Discrete checkpoint `k` as a step count.
    pub fn step(&self, k: u32) -> u64 {
        self.time(k).ceil().max(1.0) as u64
    }
}

impl Default for CheckpointSchedule {
    fn default() -> Self {
        CheckpointSchedule { ratio: 1.1, first: 1e-2 }
    }
}
