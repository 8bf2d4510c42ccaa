use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{read_json, SUMMARY_FILE};
use super::summary::RunSummary;
use crate::error::{Error, Result};
use crate::kkt::direction_angle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDigest {
    pub dir: PathBuf,
    pub method: String,
    pub normalized_margin: f64,
    pub oracle_angle_deg: Option<f64>,
    pub weighted_oracle_angle_deg: Option<f64>,
    pub final_params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub dataset_hash: String,
    pub a: RunDigest,
    pub b: RunDigest,
    /// Angle between the two final parameter vectors.
    pub angle_between_deg: f64,
    pub normalized_margin_delta: f64,
    pub oracle_angle_delta_deg: Option<f64>,
}

fn digest(dir: &Path, s: &RunSummary) -> RunDigest {
    RunDigest {
        dir: dir.to_path_buf(),
        method: s.method.clone(),
        normalized_margin: s.normalized_margin,
        oracle_angle_deg: s.oracle.as_ref().map(|o| o.angle_deg),
        weighted_oracle_angle_deg: s.oracle.as_ref().and_then(|o| o.weighted_angle_deg),
        final_params: s.final_params.clone(),
    }
}

/// Compares two finished runs on the same dataset.
pub fn compare_runs(dir_a: &Path, dir_b: &Path) -> Result<Comparison> {
    let a: RunSummary = read_json(&dir_a.join(SUMMARY_FILE))?;
    let b: RunSummary = read_json(&dir_b.join(SUMMARY_FILE))?;
    if a.dataset_hash != b.dataset_hash {
        return Err(Error::Config(format!(
            "runs used different datasets ({} vs {})",
            a.dataset_hash, b.dataset_hash
        )));
    }
    if a.final_params.len() != b.final_params.len() {
        return Err(Error::Dimension { expected: a.final_params.len(), got: b.final_params.len() });
    }
    let angle = if a.final_params == b.final_params {
        0.0
    } else {
        direction_angle(&a.final_params, &b.final_params)?
    };
    let da = digest(dir_a, &a);
    let db = digest(dir_b, &b);
    let oracle_delta = match (da.oracle_angle_deg, db.oracle_angle_deg) {
        (Some(x), Some(y)) => Some(y - x),
        _ => None,
    };
    Ok(Comparison {
        dataset_hash: a.dataset_hash.clone(),
        normalized_margin_delta: db.normalized_margin - da.normalized_margin,
        angle_between_deg: angle,
        oracle_angle_delta_deg: oracle_delta,
        a: da,
        b: db,
    })
}
