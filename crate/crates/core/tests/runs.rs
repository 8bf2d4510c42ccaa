use std::path::{Path, PathBuf};

use marginflow::harness::{compare_runs, run_experiment, ExperimentConfig, RunOptions};
use marginflow::Error;

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.toml"));
    ExperimentConfig::from_path(path).unwrap()
}

fn opts(out: PathBuf) -> RunOptions {
    RunOptions { out_dir: Some(out), ..Default::default() }
}

#[test]
fn discrete_resume_matches_an_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config("iso_rmsprop");
    cfg.optimizer.mode = marginflow::optim::Mode::Discrete;
    cfg.optimizer.eta = 0.01;

    let whole = run_experiment(&cfg, &RunOptions { max_steps: Some(4000), ..opts(tmp.path().join("whole")) }).unwrap();
    run_experiment(&cfg, &RunOptions { max_steps: Some(1500), ..opts(tmp.path().join("a")) }).unwrap();
    let resumed = run_experiment(
        &cfg,
        &RunOptions { max_steps: Some(2500), resume: Some(tmp.path().join("a")), ..opts(tmp.path().join("b")) },
    )
    .unwrap();

    assert_eq!(resumed.state.steps, 4000);
    assert_eq!(resumed.state.params, whole.state.params);
    assert_eq!(resumed.state.m, whole.state.m);
    // The resumed file also carries the first leg's terminal row at t = 1500.
    let ck = |d: &str| -> Vec<String> {
        let text = std::fs::read_to_string(tmp.path().join(d).join("checkpoints.csv")).unwrap();
        text.lines().filter(|l| !l.starts_with("1500,")).map(String::from).collect()
    };
    assert_eq!(ck("whole"), ck("b"));
}

#[test]
fn repeated_runs_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("aniso_rmsprop");
    let a = run_experiment(&cfg, &opts(tmp.path().join("a"))).unwrap();
    let b = run_experiment(&cfg, &opts(tmp.path().join("b"))).unwrap();
    assert_eq!(a.state, b.state);
    for f in ["trajectory.csv", "checkpoints.csv", "state.json"] {
        let read = |d: &str| std::fs::read(tmp.path().join(d).join(f)).unwrap();
        assert_eq!(read("a"), read("b"), "{f} differs");
    }
}

#[test]
fn seed_override_changes_the_start() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("iso_gd");
    let short = |dir: &str, seed| RunOptions { max_steps: Some(0), seed, ..opts(tmp.path().join(dir)) };
    let a = run_experiment(&cfg, &short("a", None)).unwrap();
    let b = run_experiment(&cfg, &short("b", Some(99))).unwrap();
    assert_ne!(a.state.params, b.state.params);
    assert_eq!(b.summary.seed, 99);
    assert_ne!(a.summary.config_hash, b.summary.config_hash);
}

#[test]
fn resume_rejects_a_different_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("aniso_gd");
    run_experiment(&cfg, &RunOptions { max_steps: Some(100), ..opts(tmp.path().join("a")) }).unwrap();
    let mut other = cfg.clone();
    other.optimizer.init_scale = 0.25;
    let err = run_experiment(&other, &RunOptions { resume: Some(tmp.path().join("a")), ..opts(tmp.path().join("b")) })
        .unwrap_err();
    assert!(matches!(err, Error::Config(ref m) if m.contains("different config")), "{err}");
}

#[test]
fn conditioner_moves_the_aniso_limit_direction() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["aniso_gd", "aniso_adagrad", "aniso_rmsprop"] {
        run_experiment(&config(name), &opts(tmp.path().join(name))).unwrap();
    }
    let d = |n: &str| tmp.path().join(n);
    let gd_rms = compare_runs(&d("aniso_gd"), &d("aniso_rmsprop")).unwrap();
    let ada_rms = compare_runs(&d("aniso_adagrad"), &d("aniso_rmsprop")).unwrap();
    let itself = compare_runs(&d("aniso_adagrad"), &d("aniso_adagrad")).unwrap();

    assert!(gd_rms.angle_between_deg < 1.0, "{}", gd_rms.angle_between_deg);
    assert!(ada_rms.angle_between_deg > 8.0, "{}", ada_rms.angle_between_deg);
    assert_eq!(itself.angle_between_deg, 0.0);
    assert_eq!(itself.normalized_margin_delta, 0.0);

    let ada = ada_rms.a;
    assert!(ada.oracle_angle_deg.unwrap() > 8.0);
    assert!(ada.weighted_oracle_angle_deg.unwrap() < 3.0);
}

#[test]
fn summary_reports_all_invariants_passing_on_standard_runs() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["iso_gd", "iso_adagrad", "iso_rmsprop"] {
        let out = run_experiment(&config(name), &opts(tmp.path().join(name))).unwrap();
        let failed: Vec<_> = out.summary.failed_invariants();
        assert!(failed.is_empty(), "{name}: {failed:?}");
        assert!(out.summary.final_kkt_constructive.is_some());
        assert!(out.summary.t1.is_some());
    }
}
