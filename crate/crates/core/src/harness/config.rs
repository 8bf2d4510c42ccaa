use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::datasets;
use crate::diagnostics::T1Thresholds;
use crate::error::{Error, Result};
use crate::model::{Dataset, LossSpec, ModelKind, ModelSpec};
use crate::optim::{CheckpointSchedule, OptimizerConfig};

/// Where the training points come from. Exactly one of `named`, `csv` and
/// `points` must be set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub named: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Rows `[x_1, ..., x_d, y]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    /// Generator seed for named datasets that are sampled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub allow_nonseparable: bool,
}

fn default_ratio() -> f64 {
    1.1
}
fn default_first() -> f64 {
    1e-2
}
fn default_beta_dev() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "default_ratio")]
    pub checkpoint_ratio: f64,
    #[serde(default = "default_first")]
    pub first_checkpoint: f64,
    #[serde(default)]
    pub t1_q_min: f64,
    #[serde(default = "default_beta_dev")]
    pub t1_beta_dev: f64,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            checkpoint_ratio: default_ratio(),
            first_checkpoint: default_first(),
            t1_q_min: 0.0,
            t1_beta_dev: default_beta_dev(),
        }
    }
}

impl DiagnosticsSection {
    pub fn schedule(&self) -> Result<CheckpointSchedule> {
        CheckpointSchedule::new(self.checkpoint_ratio, self.first_checkpoint)
    }

    pub fn thresholds(&self) -> T1Thresholds {
        T1Thresholds { q_min: self.t1_q_min, beta_dev: self.t1_beta_dev }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("marginflow-run")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_out() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub model: ModelKind,
    pub loss: LossSpec,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory relative CSV paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        let sources = d.named.is_some() as u8 + d.csv.is_some() as u8 + d.points.is_some() as u8;
        if sources != 1 {
            return Err(Error::Config(
                "dataset needs exactly one of `named`, `csv`, `points`".into(),
            ));
        }
        if let Some(name) = &d.named {
            if !datasets::BUNDLED.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "unknown bundled dataset `{name}`; expected one of {:?}",
                    datasets::BUNDLED
                )));
            }
        }
        self.optimizer.validate()?;
        self.diagnostics.schedule()?;
        if !(self.diagnostics.t1_beta_dev > 0.0) {
            return Err(Error::Config("diagnostics.t1_beta_dev must be positive".into()));
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let d = &self.dataset;
        if let Some(name) = &d.named {
            return datasets::bundled(name, d.seed);
        }
        if let Some(rows) = &d.points {
            return Dataset::from_rows(rows);
        }
        let rel = d.csv.as_ref().expect("validated");
        let path = match &self.base_dir {
            Some(base) if rel.is_relative() => base.join(rel),
            _ => rel.clone(),
        };
        Dataset::from_csv_path(path)
    }

    pub fn model_spec(&self, data: &Dataset) -> Result<ModelSpec> {
        ModelSpec::new(self.model, data.dim())
    }

    /// SHA-256 of the canonical TOML rendering with the output directory
    /// blanked, so relocating a run does not change its identity.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        let text = c.to_toml_string()?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[dataset]
named = "linear2d_iso"

[model]
kind = "linear"

[loss]
kind = "logistic"

[optimizer]
method = "rmsprop"
mode = "flow"
max_flow_time = 1e12
"#;

    #[test]
    fn roundtrip() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(back.optimizer.max_flow_time, 1e12);
        assert_eq!(back.diagnostics, DiagnosticsSection::default());
    }

    #[test]
    fn unknown_keys_are_named() {
        let bad = SAMPLE.replace("max_flow_time", "max_flow_tme");
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(err.contains("max_flow_tme"), "{err}");
        let bad = SAMPLE.replace("[loss]", "[loss]\nshape = 2");
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(err.contains("shape"), "{err}");
    }

    #[test]
    fn exactly_one_source() {
        let two = SAMPLE.replace("named = \"linear2d_iso\"", "named = \"linear2d_iso\"\ncsv = \"x.csv\"");
        assert!(matches!(ExperimentConfig::from_toml_str(&two), Err(Error::Config(_))));
        let unknown = SAMPLE.replace("linear2d_iso", "nope");
        assert!(matches!(ExperimentConfig::from_toml_str(&unknown), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        let mut b = a.clone();
        b.output.dir = "elsewhere".into();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.optimizer.seed += 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn inline_points() {
        let text = SAMPLE.replace("named = \"linear2d_iso\"", "points = [[1.0, 0.0, 1.0], [0.0, 1.0, -1.0]]");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let d = cfg.load_dataset().unwrap();
        assert_eq!((d.len(), d.dim()), (2, 2));
    }
}
