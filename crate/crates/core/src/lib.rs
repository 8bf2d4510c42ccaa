//! Simulator and certification toolkit for the implicit bias of adaptive
//! optimizers (AdaGrad, RMSProp) on homogeneous models.
//!
//! * [`model`]: homogeneous predictors, margins, losses and exact gradients.
//! * [`optim`]: discrete updates, continuous flows, normalized coordinates.
//! * [`diagnostics`]: per-checkpoint analysis quantities along a trajectory.
//! * [`kkt`]: approximate-KKT residuals and exact max-margin oracles.
//! * [`harness`]: configuration, orchestration, persistence and reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod fmt;
pub mod harness;
pub mod kkt;
pub mod linalg;
pub mod model;
pub mod optim;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
