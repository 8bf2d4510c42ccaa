use super::{Method, OptimizerConfig, OptimizerState};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, norm_sq};
use crate::model::Objective;

/// Halvings tried by the descent guard before a step is taken as is.
const MAX_GUARD_HALVINGS: u32 = 60;

/// `w <- w - eta g`.
pub fn apply_gd(state: &mut OptimizerState, g: &[f64], eta: f64) {
    for (w, gi) in state.params.iter_mut().zip(g) {
        *w -= eta * gi;
    }
    state.grad_sq_total += norm_sq(g);
    state.steps += 1;
}

/// `m <- m + g^2; w <- w - eta g / sqrt(cond_eps + m)`. The current gradient
/// enters the accumulator before the division.
pub fn apply_adagrad(state: &mut OptimizerState, g: &[f64], eta: f64, cond_eps: f64) {
    for ((w, m), gi) in state.params.iter_mut().zip(state.m.iter_mut()).zip(g) {
        *m += gi * gi;
        *w -= eta * gi / (cond_eps + *m).sqrt();
    }
    state.grad_sq_total += norm_sq(g);
    state.steps += 1;
}

/// `m <- b m + (1 - b) g^2; w <- w - eta g / sqrt(cond_eps + m)`.
pub fn apply_rmsprop(state: &mut OptimizerState, g: &[f64], eta: f64, cond_eps: f64, decay_b: f64) {
    for ((w, m), gi) in state.params.iter_mut().zip(state.m.iter_mut()).zip(g) {
        *m = decay_b * *m + (1.0 - decay_b) * gi * gi;
        *w -= eta * gi / (cond_eps + *m).sqrt();
    }
    state.grad_sq_total += norm_sq(g);
    state.steps += 1;
}

fn apply(state: &mut OptimizerState, g: &[f64], cfg: &OptimizerConfig, eta: f64) {
    match cfg.method {
        Method::Gd => apply_gd(state, g, eta),
        Method::Adagrad => apply_adagrad(state, g, eta, cfg.cond_eps),
        Method::Rmsprop => apply_rmsprop(state, g, eta, cfg.cond_eps, cfg.decay_b),
    }
}

fn gradient_checked(state: &OptimizerState, obj: &Objective) -> Result<Vec<f64>> {
    let g = obj.gradient(&state.params)?;
    if !all_finite(&g) {
        return Err(Error::NumericFailure {
            message: format!("non-finite gradient at step {}", state.steps),
            last_good: Box::new(state.clone()),
        });
    }
    Ok(g)
}

fn commit(state: &mut OptimizerState, candidate: OptimizerState) -> Result<()> {
    if !candidate.is_finite() {
        return Err(Error::NumericFailure {
            message: format!("non-finite update at step {}", candidate.steps),
            last_good: Box::new(state.clone()),
        });
    }
    *state = candidate;
    Ok(())
}

pub fn gd_step(state: &mut OptimizerState, obj: &Objective, eta: f64) -> Result<()> {
    let g = gradient_checked(state, obj)?;
    let mut next = state.clone();
    apply_gd(&mut next, &g, eta);
    commit(state, next)
}

pub fn adagrad_step(state: &mut OptimizerState, obj: &Objective, cfg: &OptimizerConfig) -> Result<()> {
    let g = gradient_checked(state, obj)?;
    let mut next = state.clone();
    apply_adagrad(&mut next, &g, cfg.eta, cfg.cond_eps);
    commit(state, next)
}

pub fn rmsprop_step(state: &mut OptimizerState, obj: &Objective, cfg: &OptimizerConfig) -> Result<()> {
    let g = gradient_checked(state, obj)?;
    let mut next = state.clone();
    apply_rmsprop(&mut next, &g, cfg.eta, cfg.cond_eps, cfg.decay_b);
    commit(state, next)
}

/// One discrete step with the descent guard: once `L < N/e`, a step that
/// would increase the loss is retried with `eta` halved, and each halving is
/// counted in `state.eta_halvings`.
pub fn guarded_step(state: &mut OptimizerState, obj: &Objective, cfg: &OptimizerConfig) -> Result<()> {
    let g = gradient_checked(state, obj)?;
    let before = obj.log_inv_loss(&state.params)?;
    let n = obj.data.len() as f64;
    let guard_active = before > 1.0 - n.ln();
    let mut eta = cfg.eta;
    let mut halvings = 0;
    loop {
        let mut next = state.clone();
        apply(&mut next, &g, cfg, eta);
        if !next.is_finite() && !guard_active {
            return commit(state, next);
        }
        let accept = !guard_active
            || halvings >= MAX_GUARD_HALVINGS
            || (next.is_finite() && obj.log_inv_loss(&next.params)? >= before);
        if accept {
            next.eta_halvings += u64::from(halvings);
            return commit(state, next);
        }
        eta *= 0.5;
        halvings += 1;
    }
}
