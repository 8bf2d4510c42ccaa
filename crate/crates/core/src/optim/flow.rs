use super::{conditioner, CheckpointSchedule, Method, Mode, OptimizerConfig, OptimizerState, Snapshot};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, norm, norm_sq};
use crate::model::Objective;

/// Steps below this size are treated as a stiffness failure.
pub const MIN_DT: f64 = 1e-300;
/// So are steps below `STALL * t`, which no longer advance the clock in a
/// useful way (typically a trajectory sliding along a ReLU kink).
pub const STALL: f64 = 1e-13;
/// `||dw|| <= MAX_REL_MOVE * (1 + ||w||)` on every accepted step.
pub const MAX_REL_MOVE: f64 = 0.1;
/// A step that changes the ReLU activation pattern skips the field-change
/// test when it moves at most `KINK_MOVE * flow_tol * (1 + ||w||)`.
pub const KINK_MOVE: f64 = 1e-2;
pub const GROWTH: f64 = 1.25;
pub const GROWTH_STREAK: u32 = 5;

fn field(method: Method, cond_eps: f64, m: &[f64], g: &[f64]) -> Vec<f64> {
    conditioner(method, cond_eps, m)
        .iter()
        .zip(g)
        .map(|(h, gi)| -h * gi)
        .collect()
}

/// Accumulator after a step of length `dt` with the gradient frozen at `g`.
///
/// AdaGrad: `dm/dt = g^2`. RMSProp: `dm/dt = (1 - b)(g^2 - m)`, advanced with
/// its exact solution for frozen `g` so that large late-time steps stay
/// stable and `m` stays nonnegative.
pub fn advance_accumulator(method: Method, decay_b: f64, m: &[f64], g: &[f64], dt: f64) -> Vec<f64> {
    match method {
        Method::Gd => m.to_vec(),
        Method::Adagrad => m.iter().zip(g).map(|(mi, gi)| mi + dt * gi * gi).collect(),
        Method::Rmsprop => {
            let keep = (-(1.0 - decay_b) * dt).exp();
            m.iter()
                .zip(g)
                .map(|(mi, gi)| keep * mi + (1.0 - keep) * gi * gi)
                .collect()
        }
    }
}

fn relative_change(a: &[f64], b: &[f64]) -> f64 {
    let base = norm(a);
    let diff = norm(&crate::linalg::sub(b, a));
    if base == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / base
    }
}

/// Integrates `dw/dt = -h(t) * dL(w)` with the matching accumulator ODE up
/// to flow time `t_end` (or until `max_steps` more steps are accepted),
/// calling `sink` at every checkpoint time it crosses.
///
/// Explicit Euler with adaptive step: a trial step is accepted when the loss
/// does not increase, `||dw|| <= 0.1 (1 + ||w||)`, and the vector field
/// changes by at most `flow_tol` relative to its start-of-step value
/// (waived for short steps across a ReLU kink, see [`KINK_MOVE`]). On
/// rejection `dt` halves; after five consecutive accepts it grows by 1.25.
pub fn flow_integrate(
    state: &mut OptimizerState,
    obj: &Objective,
    cfg: &OptimizerConfig,
    t_end: f64,
    schedule: &CheckpointSchedule,
    max_steps: u64,
    sink: &mut dyn FnMut(&Snapshot) -> Result<()>,
) -> Result<()> {
    if cfg.mode != Mode::Flow {
        return Err(Error::Config("flow_integrate needs optimizer.mode = \"flow\"".into()));
    }
    while schedule.time(state.next_checkpoint) <= state.time {
        state.next_checkpoint += 1;
    }
    let mut g = obj.gradient(&state.params)?;
    let mut log_inv = obj.log_inv_loss(&state.params)?;
    let mut taken = 0u64;
    while state.time < t_end && taken < max_steps {
        let target = schedule.time(state.next_checkpoint);
        let stop = target.min(t_end);
        let h = state.dt.min(stop - state.time);
        let lands = h >= stop - state.time;

        let f0 = field(cfg.method, cfg.cond_eps, &state.m, &g);
        let w1: Vec<f64> = state.params.iter().zip(&f0).map(|(w, f)| w + h * f).collect();
        let m1 = advance_accumulator(cfg.method, cfg.decay_b, &state.m, &g, h);

        let mut accepted = None;
        if all_finite(&w1) && all_finite(&m1) {
            let g1 = obj.gradient(&w1)?;
            let li1 = obj.log_inv_loss(&w1)?;
            let f1 = field(cfg.method, cfg.cond_eps, &m1, &g1);
            let moved = h * norm(&f0);
            let scale = 1.0 + norm(&state.params);
            let smooth = relative_change(&f0, &f1) <= cfg.flow_tol;
            let kink = moved <= KINK_MOVE * cfg.flow_tol * scale
                && obj.model.activation_pattern(&w1, obj.data) != obj.model.activation_pattern(&state.params, obj.data);
            if all_finite(&g1) && li1 >= log_inv && moved <= MAX_REL_MOVE * scale && (smooth || kink) {
                accepted = Some((g1, li1));
            }
        }

        match accepted {
            Some((g1, li1)) => {
                state.grad_sq_total += h * norm_sq(&g);
                state.params = w1;
                state.m = m1;
                state.time = if lands { stop } else { state.time + h };
                state.steps += 1;
                taken += 1;
                state.accept_streak += 1;
                if state.accept_streak >= GROWTH_STREAK {
                    state.dt *= GROWTH;
                    state.accept_streak = 0;
                }
                g = g1;
                log_inv = li1;
                if state.time >= target {
                    sink(&Snapshot::of(state, Mode::Flow))?;
                    while schedule.time(state.next_checkpoint) <= state.time {
                        state.next_checkpoint += 1;
                    }
                }
            }
            None => {
                state.dt = 0.5 * h;
                state.accept_streak = 0;
                state.rejections += 1;
                if state.dt < MIN_DT.max(STALL * state.time) {
                    return Err(Error::Stiffness {
                        dt: state.dt,
                        t: state.time,
                        last_good: Box::new(state.clone()),
                    });
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dataset, LossSpec, ModelSpec, ParamVector};

    fn one_d() -> (ModelSpec, LossSpec, Dataset) {
        (ModelSpec::linear(1), LossSpec::exponential(), Dataset::new(vec![vec![1.0]], vec![1.0]).unwrap())
    }

    fn gd_flow() -> OptimizerConfig {
        OptimizerConfig::new(Method::Gd, Mode::Flow)
    }

    fn integrate(state: &mut OptimizerState, obj: &Objective, cfg: &OptimizerConfig, t_end: f64) -> Vec<Snapshot> {
        let mut out = Vec::new();
        let sched = CheckpointSchedule::default();
        flow_integrate(state, obj, cfg, t_end, &sched, u64::MAX, &mut |s| {
            out.push(s.clone());
            Ok(())
        })
        .unwrap();
        out
    }

    #[test]
    fn gd_flow_matches_closed_form() {
        // dw/dt = e^{-w}  =>  w(t) = log(t + e^{w0})
        let (m, l, d) = one_d();
        let obj = Objective::new(&m, &l, &d).unwrap();
        let mut s = OptimizerState::new(ParamVector::new(vec![0.0]).unwrap());
        let snaps = integrate(&mut s, &obj, &gd_flow(), 1e8);
        assert_eq!(s.time, 1e8);
        for snap in snaps.iter().filter(|s| s.t > 10.0) {
            let exact = (snap.t + 1.0).ln();
            assert!((snap.w[0] - exact).abs() < gd_flow().flow_tol, "t={} w={} exact={exact}", snap.t, snap.w[0]);
            let lt = (-snap.w[0]).exp() * snap.t;
            assert!((lt - snap.t / (snap.t + 1.0)).abs() < 0.02);
        }
    }

    #[test]
    fn halving_tolerance_halves_error() {
        let (m, l, d) = one_d();
        let obj = Objective::new(&m, &l, &d).unwrap();
        let t_end = 1e12;
        let exact = (t_end + 1.0f64).ln();
        let mut errs = Vec::new();
        for tol in [0.04, 0.02, 0.01] {
            let mut cfg = gd_flow();
            cfg.flow_tol = tol;
            let mut s = OptimizerState::new(ParamVector::new(vec![0.0]).unwrap());
            integrate(&mut s, &obj, &cfg, t_end);
            errs.push((tol, (s.params[0] - exact).abs()));
        }
        for w in errs.windows(2) {
            let (tol, e) = w[0];
            let (_, e_half) = w[1];
            assert!((e - e_half).abs() <= tol, "{errs:?}");
            assert!(e <= tol, "{errs:?}");
        }
    }

    #[test]
    fn saturated_start_does_not_move() {
        let (m, l, d) = one_d();
        let obj = Objective::new(&m, &l, &d).unwrap();
        let mut s = OptimizerState::new(ParamVector::new(vec![200.0]).unwrap());
        integrate(&mut s, &obj, &gd_flow(), 100.0);
        assert!((s.params[0] - 200.0).abs() <= 1e-40);
    }

    #[test]
    fn rmsprop_accumulator_constant_gradient() {
        // m(t) = c^2 (1 - e^{-(1-b) t}) for g == c, from m(0) = 0
        let (c, b) = (0.7, 0.9);
        let mut m = vec![0.0];
        let mut t = 0.0;
        for dt in [0.1, 0.5, 2.0, 3.3, 10.0] {
            m = advance_accumulator(Method::Rmsprop, b, &m, &[c], dt);
            t += dt;
            let exact = c * c * (1.0 - (-(1.0 - b) * t).exp());
            assert!((m[0] - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn checkpoints_land_exactly() {
        let (m, l, d) = one_d();
        let obj = Objective::new(&m, &l, &d).unwrap();
        let mut s = OptimizerState::new(ParamVector::new(vec![0.0]).unwrap());
        let snaps = integrate(&mut s, &obj, &gd_flow(), 10.0);
        let sched = CheckpointSchedule::default();
        for (k, snap) in snaps.iter().enumerate() {
            assert_eq!(snap.t, sched.time(k as u32));
        }
        assert!(snaps.last().unwrap().t <= 10.0);
    }

    #[test]
    fn discrete_mode_rejected() {
        let (m, l, d) = one_d();
        let obj = Objective::new(&m, &l, &d).unwrap();
        let cfg = OptimizerConfig::new(Method::Gd, Mode::Discrete);
        let mut s = OptimizerState::new(ParamVector::new(vec![0.0]).unwrap());
        let r = flow_integrate(&mut s, &obj, &cfg, 1.0, &CheckpointSchedule::default(), 10, &mut |_| Ok(()));
        assert!(r.is_err());
    }
}
