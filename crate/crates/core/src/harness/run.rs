use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::invariants::{self, Context};
use super::separability::check_separable;
use super::summary::{OracleComparison, RunStatus, RunSummary};
use crate::diagnostics::{analyze_trajectory, normalized_margin, rate_check, write_csv, TrajectoryAnalysis};
use crate::error::{Error, Result};
use crate::fmt::fmt_f64;
use crate::kkt::{
    certify, direction_angle, nnls_lambdas, constructive_lambdas, scale_to_boundary, svm_oracle, KktReport,
    MarginProblem, MultiplierSource, OracleSolution, ORACLE_MAX_DIM, ORACLE_MAX_POINTS,
};
use crate::model::{Dataset, ModelKind, ModelSpec, Objective};
use crate::optim::{
    conditioner, normalize_view, run_trajectory, Budget, Method, Mode, OptimizerConfig, OptimizerState, Snapshot,
};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CHECKPOINTS_FILE: &str = "checkpoints.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const STATE_FILE: &str = "state.json";

/// Command-line overrides of a config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Steps for this invocation (integrator steps in flow mode).
    pub max_steps: Option<u64>,
    /// Absolute flow time to stop at.
    pub flow_time: Option<f64>,
    /// Run directory whose `state.json` to continue from.
    pub resume: Option<PathBuf>,
}

/// Contents of `state.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SavedState {
    pub config_hash: String,
    pub dataset_hash: String,
    pub seed: u64,
    pub state: OptimizerState,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub analysis: TrajectoryAnalysis,
    pub snapshots: Vec<Snapshot>,
    pub state: OptimizerState,
    pub out_dir: PathBuf,
}

/// Everything derived from a config before any step is taken.
pub struct Prepared {
    pub cfg: ExperimentConfig,
    pub data: Dataset,
    pub model: ModelSpec,
    pub config_hash: String,
    pub dataset_hash: String,
}

pub fn prepare(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<Prepared> {
    let mut cfg = cfg.clone();
    if let Some(s) = seed {
        cfg.optimizer.seed = s;
    }
    cfg.validate()?;
    let data = cfg.load_dataset()?;
    let model = cfg.model_spec(&data)?;
    if !cfg.dataset.allow_nonseparable {
        check_separable(&model, &data)?;
    }
    let config_hash = cfg.hash()?;
    let dataset_hash = data.content_hash();
    Ok(Prepared { cfg, data, model, config_hash, dataset_hash })
}

/// Runs one experiment and writes `checkpoints.csv` (streamed),
/// `trajectory.csv`, `summary.json` and `state.json` into the output
/// directory. A numeric failure still writes all four files, describing
/// the trajectory up to the last finite state, and is then returned.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutput> {
    let started = Instant::now();
    let prep = prepare(cfg, opts.seed)?;
    let ocfg = prep.cfg.optimizer.clone();
    let out_dir = opts.out_dir.clone().unwrap_or_else(|| prep.cfg.output.dir.clone());
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let schedule = prep.cfg.diagnostics.schedule()?;

    let (mut state, prefix) = match &opts.resume {
        Some(dir) => load_resume(dir, &prep)?,
        None => (OptimizerState::init(&prep.model, &ocfg)?, Vec::new()),
    };
    let mut budget = Budget::from_config(&ocfg);
    if let Some(n) = opts.max_steps {
        budget.max_steps = n;
    }
    if let Some(t) = opts.flow_time {
        budget.flow_time = t;
    }

    let p = prep.model.param_count();
    let ck_path = out_dir.join(CHECKPOINTS_FILE);
    let mut ck = BufWriter::new(File::create(&ck_path).map_err(|e| Error::io(&ck_path, e))?);
    let io = |e| Error::io(&ck_path, e);
    writeln!(ck, "{}", checkpoint_header(p)).map_err(io)?;
    for s in &prefix {
        writeln!(ck, "{}", checkpoint_row(s)).map_err(io)?;
    }
    ck.flush().map_err(io)?;

    let loss = prep.cfg.loss;
    let obj = Objective::new(&prep.model, &loss, &prep.data)?;
    let mut snapshots = prefix;
    let outcome = {
        let mut sink = |s: &Snapshot| -> Result<()> {
            writeln!(ck, "{}", checkpoint_row(s)).map_err(io)?;
            ck.flush().map_err(io)?;
            snapshots.push(s.clone());
            Ok(())
        };
        run_trajectory(&mut state, &obj, &ocfg, &schedule, budget, &mut sink)
    };
    drop(ck);

    let (status, failure) = match outcome {
        Ok(()) => (RunStatus::Completed, None),
        Err(Error::NumericFailure { message, last_good }) => {
            state = *last_good;
            (RunStatus::NumericFailure { message: message.clone() }, Some(Error::NumericFailure { message, last_good: Box::new(state.clone()) }))
        }
        Err(Error::Stiffness { dt, t, last_good }) => {
            state = *last_good;
            let message = format!("step size {dt:e} underflowed at t = {t}");
            (RunStatus::NumericFailure { message }, Some(Error::Stiffness { dt, t, last_good: Box::new(state.clone()) }))
        }
        Err(e) => return Err(e),
    };
    if failure.is_some() {
        let last = Snapshot::of(&state, ocfg.mode);
        if snapshots.last().map(|s| s.t) != Some(last.t) {
            snapshots.push(last);
        }
    }

    let h_inf = terminal_h_inf(&ocfg, &state);
    let analysis = analyze_trajectory(&snapshots, &obj, &ocfg, &h_inf, &prep.cfg.diagnostics.thresholds())?;

    let traj_path = out_dir.join(TRAJECTORY_FILE);
    let f = File::create(&traj_path).map_err(|e| Error::io(&traj_path, e))?;
    write_csv(BufWriter::new(f), &analysis.frames).map_err(|e| Error::io(&traj_path, e))?;

    let saved = SavedState {
        config_hash: prep.config_hash.clone(),
        dataset_hash: prep.dataset_hash.clone(),
        seed: ocfg.seed,
        state: state.clone(),
    };
    write_json(&out_dir.join(STATE_FILE), &saved)?;

    let mut summary = summarize(&prep, &obj, &snapshots, &analysis, &state, status)?;
    summary.wall_clock_seconds = started.elapsed().as_secs_f64();
    write_json(&out_dir.join(SUMMARY_FILE), &summary)?;

    if let Some(e) = failure {
        return Err(e);
    }
    Ok(RunOutput { summary, analysis, snapshots, state, out_dir })
}

/// `h_inf`: ones for GD, the terminal conditioner for AdaGrad, and the fixed
/// `cond_eps^{-1/2}` for RMSProp (resolved inside the view).
pub fn terminal_h_inf(cfg: &OptimizerConfig, state: &OptimizerState) -> Vec<f64> {
    match cfg.method {
        Method::Adagrad => conditioner(cfg.method, cfg.cond_eps, &state.m),
        _ => vec![1.0; state.params.len()],
    }
}

fn summarize(
    prep: &Prepared,
    obj: &Objective,
    snapshots: &[Snapshot],
    analysis: &TrajectoryAnalysis,
    state: &OptimizerState,
    status: RunStatus,
) -> Result<RunSummary> {
    let ocfg = &prep.cfg.optimizer;
    let final_frame = analysis.frames.last().cloned().expect("nonempty");
    let (constructive, nnls) = final_kkt(obj, ocfg, state, &analysis.h_inf)?;
    let (oracle, solutions) = oracle_comparison(obj, ocfg, &state.params, &analysis.h_inf);
    let tail = grad_sq_tail(snapshots);
    let rate = rate_check(&analysis.frames, obj.degree(), analysis.t1);
    let ctx = Context {
        obj,
        cfg: ocfg,
        dataset_name: prep.cfg.dataset.named.as_deref(),
        snapshots,
        analysis,
        final_kkt: constructive.as_ref(),
        oracle: oracle.as_ref(),
        oracle_solutions: &solutions,
        grad_sq_tail_fraction: tail,
    };
    let invariants = invariants::evaluate(&ctx);
    Ok(RunSummary {
        version: crate::VERSION.to_string(),
        status,
        config_hash: prep.config_hash.clone(),
        dataset_hash: prep.dataset_hash.clone(),
        dataset: dataset_label(&prep.cfg),
        method: ocfg.method.name().to_string(),
        mode: match ocfg.mode {
            Mode::Discrete => "discrete".into(),
            Mode::Flow => "flow".into(),
        },
        loss: format!("{:?}", prep.cfg.loss.kind).to_lowercase(),
        seed: ocfg.seed,
        steps: state.steps,
        clock: state.clock(ocfg.mode),
        final_frame,
        final_params: state.params.clone(),
        normalized_margin: normalized_margin(obj.model, &state.params, obj.data).unwrap_or(f64::NAN),
        t1: analysis.t1_clock(),
        rate,
        kkt_trend: invariants::kkt_trend(analysis),
        final_kkt_constructive: constructive,
        final_kkt_nnls: nnls,
        oracle,
        h_inf: analysis.h_inf.clone(),
        final_conditioner: state.conditioner(ocfg.method, ocfg.cond_eps),
        grad_sq_total: state.grad_sq_total,
        grad_sq_tail_fraction: tail,
        integrals: analysis.integrals,
        eta_halvings: state.eta_halvings,
        flow_rejections: state.rejections,
        wall_clock_seconds: 0.0,
        invariants,
    })
}

fn dataset_label(cfg: &ExperimentConfig) -> String {
    let d = &cfg.dataset;
    if let Some(n) = &d.named {
        n.clone()
    } else if let Some(p) = &d.csv {
        p.display().to_string()
    } else {
        "inline".into()
    }
}

/// Constructive-multiplier and NNLS reports at the boundary-scaled final point.
fn final_kkt(
    obj: &Objective,
    cfg: &OptimizerConfig,
    state: &OptimizerState,
    h_inf: &[f64],
) -> Result<(Option<KktReport>, Option<KktReport>)> {
    let w = &state.params;
    let Ok(point) = scale_to_boundary(w, obj.model, obj.data) else { return Ok((None, None)) };
    let view = normalize_view(w, &state.m, cfg, h_inf)?;
    let Ok(lambdas) = constructive_lambdas(&view, obj) else { return Ok((None, None)) };
    let scaling: Vec<f64> = view.h_inf.iter().map(|h| h.powf(-0.5)).collect();
    let problem = MarginProblem::new(obj.model, obj.data, scaling)?;
    let constructive = certify(&problem, point.clone(), lambdas.clone(), MultiplierSource::Constructive).ok();
    let nnls = nnls_lambdas(&problem, &point, Some(&lambdas))
        .and_then(|l| certify(&problem, point, l, MultiplierSource::Nnls))
        .ok();
    Ok((constructive, nnls))
}

/// Oracle comparison for linear models within the oracle's size limits.
/// Returns the comparison and every `(scaling, solution)` pair computed.
pub fn oracle_comparison(
    obj: &Objective,
    cfg: &OptimizerConfig,
    w: &[f64],
    h_inf: &[f64],
) -> (Option<OracleComparison>, Vec<(Vec<f64>, OracleSolution)>) {
    let data = obj.data;
    if !matches!(obj.model.kind, ModelKind::Linear) || data.len() > ORACLE_MAX_POINTS || data.dim() > ORACLE_MAX_DIM {
        return (None, Vec::new());
    }
    let ones = vec![1.0; data.dim()];
    let Ok(plain) = svm_oracle(data, &ones) else { return (None, Vec::new()) };
    let angle = direction_angle(w, &plain.w_star).unwrap_or(f64::NAN);
    let mut cmp = OracleComparison {
        w_star: plain.w_star.clone(),
        angle_deg: angle,
        oracle_margin: 1.0 / crate::linalg::norm(&plain.w_star),
        weighted_w_star: None,
        weighted_angle_deg: None,
        weighted_scaling: None,
    };
    let mut solutions = vec![(ones, plain)];
    if cfg.method == Method::Adagrad {
        let s: Vec<f64> = h_inf.iter().map(|h| h.powf(-0.5)).collect();
        if let Ok(weighted) = svm_oracle(data, &s) {
            cmp.weighted_angle_deg = direction_angle(w, &weighted.w_star).ok();
            cmp.weighted_w_star = Some(weighted.w_star.clone());
            cmp.weighted_scaling = Some(s.clone());
            solutions.push((s, weighted));
        }
    }
    (Some(cmp), solutions)
}

/// Share of the accumulated squared gradient collected in the final decade.
fn grad_sq_tail(snapshots: &[Snapshot]) -> Option<f64> {
    let last = snapshots.last()?;
    let start = snapshots.iter().find(|s| s.t >= last.t / 10.0)?;
    (last.grad_sq_total > 0.0).then(|| (last.grad_sq_total - start.grad_sq_total) / last.grad_sq_total)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn checkpoint_header(p: usize) -> String {
    let mut cols = vec!["t".to_string(), "grad_sq_total".to_string()];
    cols.extend((1..=p).map(|j| format!("w{j}")));
    cols.extend((1..=p).map(|j| format!("m{j}")));
    cols.join(",")
}

fn checkpoint_row(s: &Snapshot) -> String {
    std::iter::once(s.t)
        .chain(std::iter::once(s.grad_sq_total))
        .chain(s.w.iter().copied())
        .chain(s.m.iter().copied())
        .map(fmt_f64)
        .collect::<Vec<_>>()
        .join(",")
}

pub fn read_checkpoints(path: &Path, p: usize) -> Result<Vec<Snapshot>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(format!("{}: {e}", path.display()))))
            .collect::<Result<_>>()?;
        if vals.len() != 2 + 2 * p {
            return Err(Error::Dimension { expected: 2 + 2 * p, got: vals.len() });
        }
        out.push(Snapshot {
            t: vals[0],
            grad_sq_total: vals[1],
            w: vals[2..2 + p].to_vec(),
            m: vals[2 + p..].to_vec(),
        });
    }
    Ok(out)
}

fn load_resume(dir: &Path, prep: &Prepared) -> Result<(OptimizerState, Vec<Snapshot>)> {
    let saved: SavedState = read_json(&dir.join(STATE_FILE))?;
    if saved.config_hash != prep.config_hash {
        return Err(Error::Config(format!(
            "state in {} was produced by a different config ({} != {})",
            dir.display(),
            saved.config_hash,
            prep.config_hash
        )));
    }
    if saved.dataset_hash != prep.dataset_hash {
        return Err(Error::Config("resumed state belongs to a different dataset".into()));
    }
    saved.state.validate_against(&prep.model)?;
    let clock = saved.state.clock(prep.cfg.optimizer.mode);
    let ck = dir.join(CHECKPOINTS_FILE);
    let prefix = if ck.exists() {
        read_checkpoints(&ck, prep.model.param_count())?
            .into_iter()
            .filter(|s| s.t < clock)
            .collect()
    } else {
        Vec::new()
    };
    Ok((saved.state, prefix))
}
