use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use marginflow::diagnostics::CSV_COLUMNS;
use marginflow::harness::{run_experiment, ExperimentConfig, RunOptions};
use serde_json::Value;

fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn names(v: &Value) -> BTreeSet<String> {
    v.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect()
}

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

#[test]
fn trajectory_schema_lists_the_csv_columns_in_order() {
    let s = schema("trajectory.schema.json");
    let fields: Vec<&str> = s["fields"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    assert_eq!(fields, CSV_COLUMNS);
}

#[test]
fn summary_schema_matches_a_written_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_path(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/aniso_adagrad.toml"))
        .unwrap();
    let out = tmp.path().join("o");
    run_experiment(&cfg, &RunOptions { out_dir: Some(out.clone()), max_steps: Some(500), ..Default::default() })
        .unwrap();
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let s = schema("summary.schema.json");

    assert_eq!(names(&s["required"]), keys(&summary));
    assert_eq!(keys(&s["properties"]), keys(&summary));
    let frame = &s["properties"]["final_frame"];
    assert_eq!(names(&frame["required"]), keys(&summary["final_frame"]));
    let csv: BTreeSet<String> = CSV_COLUMNS.iter().map(|c| c.to_string()).collect();
    assert!(csv.is_subset(&keys(&summary["final_frame"])));
}

#[test]
fn checkpoint_schema_patterns_cover_the_header() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_path(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/iso_gd.toml"))
        .unwrap();
    let out = tmp.path().join("o");
    run_experiment(&cfg, &RunOptions { out_dir: Some(out.clone()), max_steps: Some(0), ..Default::default() }).unwrap();
    let text = std::fs::read_to_string(out.join("checkpoints.csv")).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let s = schema("checkpoints.schema.json");
    let fixed: Vec<&str> = s["fields"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    assert_eq!(&header[..2], &fixed[..]);
    assert_eq!(header[2..], ["w1", "w2", "m1", "m2"]);
}
