//! Discrete GD / AdaGrad / RMSProp updates, their continuous flows, and the
//! change of coordinates to an adaptive gradient flow.

mod config;
mod discrete;
mod flow;
mod state;
mod view;

pub use config::{CheckpointSchedule, Method, Mode, OptimizerConfig};
pub use discrete::{adagrad_step, apply_adagrad, apply_gd, apply_rmsprop, gd_step, guarded_step, rmsprop_step};
pub use flow::{advance_accumulator, flow_integrate, MIN_DT};
pub use state::{conditioner, OptimizerState, Snapshot, INITIAL_DT};
pub use view::{normalize_view, resolve_h_inf, NormalizedView};

use crate::error::Result;
use crate::model::Objective;

/// How far a call to [`run_trajectory`] may advance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    /// Discrete steps, or accepted integrator steps in flow mode.
    pub max_steps: u64,
    /// Absolute flow time to stop at (ignored in discrete mode).
    pub flow_time: f64,
}

impl Budget {
    pub fn from_config(cfg: &OptimizerConfig) -> Self {
        let max_steps = match cfg.mode {
            Mode::Discrete => cfg.max_steps,
            Mode::Flow => u64::MAX,
        };
        Budget { max_steps, flow_time: cfg.max_flow_time }
    }
}

/// Advances `state` within `budget`, emitting the starting state, every
/// checkpoint crossed, and the final state (once) to `sink`.
pub fn run_trajectory(
    state: &mut OptimizerState,
    obj: &Objective,
    cfg: &OptimizerConfig,
    schedule: &CheckpointSchedule,
    budget: Budget,
    sink: &mut dyn FnMut(&Snapshot) -> Result<()>,
) -> Result<()> {
    let mut last_emitted = state.clock(cfg.mode);
    sink(&Snapshot::of(state, cfg.mode))?;
    let mut emit = |snap: &Snapshot| -> Result<()> {
        last_emitted = snap.t;
        sink(snap)
    };
    match cfg.mode {
        Mode::Discrete => {
            while schedule.step(state.next_checkpoint) <= state.steps {
                state.next_checkpoint += 1;
            }
            for _ in 0..budget.max_steps {
                guarded_step(state, obj, cfg)?;
                if state.steps >= schedule.step(state.next_checkpoint) {
                    emit(&Snapshot::of(state, cfg.mode))?;
                    while schedule.step(state.next_checkpoint) <= state.steps {
                        state.next_checkpoint += 1;
                    }
                }
            }
        }
        Mode::Flow => {
            flow_integrate(state, obj, cfg, budget.flow_time, schedule, budget.max_steps, &mut emit)?;
        }
    }
    if state.clock(cfg.mode) != last_emitted {
        sink(&Snapshot::of(state, cfg.mode))?;
    }
    Ok(())
}
