use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::invariants::SUITE_ONLY;
use super::run::{prepare, read_json, run_experiment, RunOptions, SavedState, CHECKPOINTS_FILE, STATE_FILE, TRAJECTORY_FILE};
use crate::error::{Error, Result};
use crate::model::{Dataset, LossSpec, ModelSpec, Objective, ParamVector};
use crate::optim::{run_trajectory, Budget, CheckpointSchedule, Method, Mode, OptimizerConfig, OptimizerState};

/// Wall-clock budget for the whole suite.
pub const SELFCHECK_BUDGET_SECS: f64 = 120.0;

/// Deliberate defects used to confirm the suite catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// One label of a bundled fixture is set to 0.
    LabelZero,
    /// The logistic `g` switches to its asymptote at 2 and drops the
    /// first-order term.
    GAsymptote,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckLine {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        CheckLine { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfcheckReport {
    pub checks: Vec<CheckLine>,
    pub elapsed_secs: f64,
}

impl SelfcheckReport {
    pub fn lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .checks
            .iter()
            .map(|c| format!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect();
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        out.push(format!(
            "{} checks, {failed} failed, {:.1} s (budget {SELFCHECK_BUDGET_SECS} s)",
            self.checks.len(),
            self.elapsed_secs
        ));
        out
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed) && self.elapsed_secs < SELFCHECK_BUDGET_SECS
    }

    pub fn failures(&self) -> Vec<&CheckLine> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

struct Fixture {
    name: String,
    toml: String,
}

fn fixture(name: &str, dataset: &str, model: &str, loss: &str, method: &str, budget: &str) -> Fixture {
    let (mode, limit) = match budget.strip_prefix("steps:") {
        Some(n) => ("discrete", format!("max_steps = {n}")),
        None => ("flow", format!("max_flow_time = {budget}")),
    };
    let toml = format!(
        "[dataset]\n{dataset}\n\n[model]\n{model}\n\n[loss]\nkind = \"{loss}\"\n\n\
         [optimizer]\nmethod = \"{method}\"\nmode = \"{mode}\"\n{limit}\n"
    );
    Fixture { name: name.to_string(), toml }
}

const ISO: &str = "named = \"linear2d_iso\"";
const ANISO: &str = "named = \"linear2d_aniso\"";
const RAND3: &str = "named = \"linear3d_rand\"";
const XOR: &str = "named = \"xor_relu\"";
const LINEAR: &str = "kind = \"linear\"";

fn fixtures() -> Vec<Fixture> {
    let mut out = Vec::new();
    for (tag, data) in [("iso", ISO), ("aniso", ANISO)] {
        for method in ["gd", "adagrad", "rmsprop"] {
            out.push(fixture(&format!("{tag}_{method}"), data, LINEAR, "logistic", method, "1e60"));
        }
    }
    out.push(fixture("rand3d_gd_exp", RAND3, LINEAR, "exponential", "gd", "1e40"));
    out.push(fixture("rand3d_rmsprop", RAND3, LINEAR, "logistic", "rmsprop", "1e40"));
    out.push(fixture("rand3d_adagrad_discrete", RAND3, LINEAR, "logistic", "adagrad", "steps:20000"));
    out.push(fixture("iso_rmsprop_discrete", ISO, LINEAR, "logistic", "rmsprop", "steps:20000"));
    out.push(fixture(
        "iso_deep_linear_adagrad",
        ISO,
        "kind = \"deep-linear\"\ndepth = 2\nwidth = 3",
        "logistic",
        "adagrad",
        "1e30",
    ));
    out.push(fixture("xor_relu_gd", XOR, "kind = \"two-layer-relu\"\nwidth = 4", "exponential", "gd", "1e30"));
    out
}

/// Runs the invariant suite on the bundled fixtures plus the suite-level
/// checks (determinism, resume, schema strictness, integrator order).
pub fn selfcheck(fault: Option<Fault>) -> SelfcheckReport {
    let started = Instant::now();
    let scratch = scratch_dir();
    let checks = match &scratch {
        Ok(dir) => run_all(dir, fault),
        Err(e) => vec![CheckLine::new("scratch_dir", false, e.to_string())],
    };
    if let Ok(dir) = scratch {
        let _ = std::fs::remove_dir_all(dir);
    }
    SelfcheckReport { checks, elapsed_secs: started.elapsed().as_secs_f64() }
}

fn scratch_dir() -> Result<PathBuf> {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    let dir = std::env::temp_dir().join(format!("marginflow-selfcheck-{}-{nanos}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn run_all(dir: &Path, fault: Option<Fault>) -> Vec<CheckLine> {
    let mut fx = fixtures();
    if fault == Some(Fault::LabelZero) {
        fx.push(Fixture {
            name: "iso_label_zero".into(),
            toml: fx[0].toml.replace(
                ISO,
                "points = [[2.0, 0.0, 1.0], [0.0, 1.0, -1.0], [-2.0, 0.0, 0.0], [0.0, -1.0, 1.0]]",
            ),
        });
    }
    let mut checks: Vec<CheckLine> = fx.par_iter().flat_map(|f| run_fixture(f, dir)).collect();

    let g_check = match fault {
        Some(Fault::GAsymptote) => logistic_roundtrip(&|x| tampered_logistic_g(x)),
        _ => logistic_roundtrip(&|x| LossSpec::logistic().g(x)),
    };
    checks.push(g_check);

    let base = fixtures().into_iter().find(|f| f.name == "iso_rmsprop").expect("fixture");
    checks.push(named("determinism", determinism(&base.toml, dir)));
    let ada = fixtures().into_iter().find(|f| f.name == "aniso_adagrad").expect("fixture");
    checks.push(named("resume_equivalence_flow", resume_equivalence(&ada.toml, dir, "flow", 1500)));
    let disc = fixtures().into_iter().find(|f| f.name == "iso_rmsprop_discrete").expect("fixture");
    checks.push(named("resume_equivalence_discrete", resume_equivalence(&disc.toml, dir, "discrete", 3000)));
    checks.push(named("schema_strictness", schema_strictness(&base.toml)));
    checks.push(named("flow_integrator_order", flow_order()));
    checks
}

fn named(name: &str, r: Result<String, String>) -> CheckLine {
    match r {
        Ok(d) => CheckLine::new(name, true, d),
        Err(d) => CheckLine::new(name, false, d),
    }
}

fn run_fixture(f: &Fixture, dir: &Path) -> Vec<CheckLine> {
    let name = format!("fixture {}", f.name);
    let cfg = match ExperimentConfig::from_toml_str(&f.toml) {
        Ok(c) => c,
        Err(e) => return vec![CheckLine::new(name, false, format!("config rejected: {e}"))],
    };
    if let Err(e) = prepare(&cfg, None) {
        let what = match e {
            Error::Dataset(_) => "dataset validation failed",
            _ => "setup failed",
        };
        return vec![CheckLine::new(name, false, format!("{what}: {e}"))];
    }
    let opts = RunOptions { out_dir: Some(dir.join(&f.name)), ..Default::default() };
    match run_experiment(&cfg, &opts) {
        Ok(out) => {
            let s = &out.summary;
            let failed = s.failed_invariants();
            let applicable = s
                .invariants
                .iter()
                .filter(|(k, v)| v.status != super::summary::Status::NotApplicable && !SUITE_ONLY.contains(&k.as_str()))
                .count();
            let mut lines = vec![CheckLine::new(
                name.clone(),
                failed.is_empty(),
                format!("{applicable} applicable invariants, {} failed", failed.len()),
            )];
            for k in failed {
                lines.push(CheckLine::new(format!("{name} / {k}"), false, s.invariants[k].detail.clone()));
            }
            lines
        }
        Err(e) => vec![CheckLine::new(name, false, format!("run failed: {e}"))],
    }
}

/// Worst relative error of `g(f(x)) = x` and `f(g(x)) = x` for the logistic
/// loss over a grid that straddles the asymptote switch.
fn logistic_roundtrip(g: &dyn Fn(f64) -> Result<f64>) -> CheckLine {
    let loss = LossSpec::logistic();
    let mut worst: f64 = 0.0;
    let xs = (-40..=240).map(|k| k as f64 * 0.25);
    for x in xs {
        let err = |v: Result<f64>| match v {
            Ok(v) => (v - x).abs() / x.abs().max(1.0),
            Err(_) => f64::INFINITY,
        };
        worst = worst.max(err(g(loss.f(x))));
        if let Ok(gx) = g(x) {
            worst = worst.max(err(Ok(loss.f(gx))));
        }
    }
    CheckLine::new("g_f_roundtrip_logistic", worst <= 1e-9, format!("max relative error {worst:e}"))
}

fn tampered_logistic_g(x: f64) -> Result<f64> {
    if x > 2.0 {
        Ok(x)
    } else {
        LossSpec::logistic().g(x)
    }
}

fn determinism(toml: &str, dir: &Path) -> Result<String, String> {
    let cfg = ExperimentConfig::from_toml_str(toml).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for k in 0..2 {
        let out = dir.join(format!("determinism_{k}"));
        let opts = RunOptions { out_dir: Some(out.clone()), ..Default::default() };
        run_experiment(&cfg, &opts).map_err(|e| e.to_string())?;
        let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
        bytes.push((read(TRAJECTORY_FILE)?, read(CHECKPOINTS_FILE)?));
    }
    if bytes[0] == bytes[1] {
        Ok(format!("two runs wrote identical CSVs ({} trajectory bytes)", bytes[0].0.len()))
    } else {
        Err("reruns wrote different CSV bytes".into())
    }
}

fn resume_equivalence(toml: &str, dir: &Path, tag: &str, n: u64) -> Result<String, String> {
    let cfg = ExperimentConfig::from_toml_str(toml).map_err(|e| e.to_string())?;
    let go = |sub: &str, steps: u64, resume: Option<PathBuf>| -> Result<Vec<f64>, String> {
        let opts = RunOptions {
            out_dir: Some(dir.join(format!("resume_{tag}_{sub}"))),
            max_steps: Some(steps),
            resume,
            ..Default::default()
        };
        run_experiment(&cfg, &opts).map(|o| o.state.params).map_err(|e| e.to_string())
    };
    let straight = go("full", 2 * n, None)?;
    go("half", n, None)?;
    let resumed = go("resumed", n, Some(dir.join(format!("resume_{tag}_half"))))?;
    let saved: SavedState = read_json(&dir.join(format!("resume_{tag}_resumed")).join(STATE_FILE)).map_err(|e| e.to_string())?;
    let rel = straight
        .iter()
        .zip(&resumed)
        .map(|(a, b)| (a - b).abs() / a.abs().max(1e-300))
        .fold(0.0, f64::max);
    if rel <= 1e-12 && saved.state.steps == 2 * n {
        Ok(format!("{} + {} steps match {} steps, max relative difference {rel:e}", n, n, 2 * n))
    } else {
        Err(format!("max relative difference {rel:e} after {} steps", saved.state.steps))
    }
}

fn schema_strictness(toml: &str) -> Result<String, String> {
    let typos = [
        ("named =", "nmaed =", "nmaed"),
        ("kind = \"linear\"", "kind = \"linear\"\nwdith = 3", "wdith"),
        ("method =", "methd =", "methd"),
        ("max_flow_time =", "max_flow_tme =", "max_flow_tme"),
        ("[optimizer]", "[diagnostics]\ncheckpoint_ratoi = 1.2\n\n[optimizer]", "checkpoint_ratoi"),
        ("[optimizer]", "[output]\ndri = \"x\"\n\n[optimizer]", "dri"),
        ("[loss]", "[losses]", "losses"),
    ];
    for (from, to, key) in typos {
        let bad = toml.replacen(from, to, 1);
        match ExperimentConfig::from_toml_str(&bad) {
            Ok(_) => return Err(format!("misspelled `{key}` was accepted")),
            Err(e) if !e.to_string().contains(key) => {
                return Err(format!("error for misspelled `{key}` does not name it: {e}"));
            }
            Err(_) => {}
        }
    }
    Ok(format!("{} misspelled keys rejected by name", typos.len()))
}

/// Gradient flow on `l(q) = e^{-q}` with one point `x = 1` solves
/// `w(t) = ln(e^{w0} + t)`. Halving `flow_tol` must move the end point by no
/// more than a tolerance-proportional amount and shrink the error.
fn flow_order() -> Result<String, String> {
    let fail = |e: Error| e.to_string();
    let data = Dataset::new(vec![vec![1.0]], vec![1.0]).map_err(fail)?;
    let model = ModelSpec::linear(1);
    let loss = LossSpec::exponential();
    let obj = Objective::new(&model, &loss, &data).map_err(fail)?;
    let schedule = CheckpointSchedule::new(1.1, 1e-2).map_err(fail)?;
    let (w0, t_end) = (0.0f64, 1e3);
    let exact = (w0.exp() + t_end).ln();
    let end = |tol: f64| -> Result<f64, String> {
        let mut cfg = OptimizerConfig::new(Method::Gd, Mode::Flow);
        cfg.flow_tol = tol;
        let mut state = OptimizerState::new(ParamVector::new(vec![w0]).map_err(fail)?);
        let budget = Budget { max_steps: u64::MAX, flow_time: t_end };
        run_trajectory(&mut state, &obj, &cfg, &schedule, budget, &mut |_| Ok(())).map_err(fail)?;
        Ok(state.params[0])
    };
    let tol = OptimizerConfig::new(Method::Gd, Mode::Flow).flow_tol;
    let coarse = end(tol)?;
    let fine = end(tol / 2.0)?;
    let (e1, e2) = ((coarse - exact).abs(), (fine - exact).abs());
    let bound = tol * (1.0 + exact.abs());
    let detail = format!("errors {e1:e} -> {e2:e}, shift {:e} vs bound {bound:e}", (coarse - fine).abs());
    if (coarse - fine).abs() <= bound && e2 < e1 && e1 <= bound {
        Ok(detail)
    } else {
        Err(detail)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_catches_tampered_asymptote() {
        assert!(logistic_roundtrip(&|x| LossSpec::logistic().g(x)).passed);
        assert!(!logistic_roundtrip(&tampered_logistic_g).passed);
    }

    #[test]
    fn schema_check_on_fixture() {
        let f = &fixtures()[0];
        schema_strictness(&f.toml).unwrap();
    }

    #[test]
    fn flow_order_passes() {
        let d = flow_order().unwrap();
        assert!(d.contains("errors"));
    }

    #[test]
    fn fixtures_parse() {
        for f in fixtures() {
            ExperimentConfig::from_toml_str(&f.toml).unwrap_or_else(|e| panic!("{}: {e}", f.name));
        }
    }
}
