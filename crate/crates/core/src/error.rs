use thiserror::Error;

use crate::optim::OptimizerState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A step produced a non-finite value. Carries the last state whose
    /// entries were all finite.
    #[error("numeric failure: {message}")]
    NumericFailure {
        message: String,
        last_good: Box<OptimizerState>,
    },

    /// Adaptive step size collapsed below the representable floor.
    #[error("stiffness: step size {dt:e} underflowed at t = {t}")]
    Stiffness {
        dt: f64,
        t: f64,
        last_good: Box<OptimizerState>,
    },

    #[error("not separated: {0}")]
    NotSeparated(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Training data that no parameter vector separates.
    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Dimension { .. }
            | Error::Dataset(_)
            | Error::Parse(_)
            | Error::Io { .. } => 2,
            Error::NumericFailure { .. }
            | Error::Stiffness { .. }
            | Error::Domain(_)
            | Error::Degenerate(_)
            | Error::NoSolution(_)
            | Error::ContractViolation(_) => 3,
            Error::NotSeparated(_) | Error::Assumption(_) => 4,
        }
    }
}
