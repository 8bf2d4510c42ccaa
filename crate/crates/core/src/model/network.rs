use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;

/// Homogeneous predictor families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", try_from = "RawModelKind")]
pub enum ModelKind {
    /// `<w, x>`.
    Linear,
    /// `W_depth ... W_1 x` with hidden width `width` (scalar output).
    DeepLinear { depth: usize, width: usize },
    /// `sum_k a_k relu(<u_k, x>)`; flat layout `[a_1..a_m, u_1.., ..., u_m..]`.
    TwoLayerRelu { width: usize },
}

/// Flat form of a `[model]` table. Serde does not reject unknown keys next
/// to a unit variant of an internally tagged enum, so the check is done here.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelKind {
    kind: String,
    depth: Option<usize>,
    width: Option<usize>,
}

impl TryFrom<RawModelKind> for ModelKind {
    type Error = String;

    fn try_from(raw: RawModelKind) -> std::result::Result<Self, String> {
        let stray = |field: &str, kind: &str| Err(format!("unknown field `{field}` for model kind `{kind}`"));
        let missing = |field: &str, kind: &str| Err(format!("missing field `{field}` for model kind `{kind}`"));
        match raw.kind.as_str() {
            "linear" => match (raw.depth, raw.width) {
                (Some(_), _) => stray("depth", "linear"),
                (_, Some(_)) => stray("width", "linear"),
                _ => Ok(ModelKind::Linear),
            },
            "deep-linear" => match (raw.depth, raw.width) {
                (None, _) => missing("depth", "deep-linear"),
                (_, None) => missing("width", "deep-linear"),
                (Some(depth), Some(width)) => Ok(ModelKind::DeepLinear { depth, width }),
            },
            "two-layer-relu" => match (raw.depth, raw.width) {
                (Some(_), _) => stray("depth", "two-layer-relu"),
                (_, None) => missing("width", "two-layer-relu"),
                (None, Some(width)) => Ok(ModelKind::TwoLayerRelu { width }),
            },
            other => Err(format!(
                "unknown variant `{other}`, expected one of `linear`, `deep-linear`, `two-layer-relu`"
            )),
        }
    }
}

/// A model family together with its input dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        match kind {
            ModelKind::DeepLinear { depth, width } if depth == 0 || width == 0 => {
                return Err(Error::Config("deep-linear needs depth >= 1 and width >= 1".into()))
            }
            ModelKind::TwoLayerRelu { width: 0 } => {
                return Err(Error::Config("two-layer-relu needs width >= 1".into()))
            }
            _ => {}
        }
        Ok(ModelSpec { kind, input_dim })
    }

    pub fn linear(input_dim: usize) -> Self {
        ModelSpec { kind: ModelKind::Linear, input_dim }
    }

    /// Homogeneity degree `L`.
    pub fn degree(&self) -> u32 {
        match self.kind {
            ModelKind::Linear => 1,
            ModelKind::DeepLinear { depth, .. } => depth as u32,
            ModelKind::TwoLayerRelu { .. } => 2,
        }
    }

    pub fn param_count(&self) -> usize {
        let d = self.input_dim;
        match self.kind {
            ModelKind::Linear => d,
            ModelKind::DeepLinear { depth: 1, .. } => d,
            ModelKind::DeepLinear { depth, width } => width * d + (depth - 2) * width * width + width,
            ModelKind::TwoLayerRelu { width } => width + width * d,
        }
    }

    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        match self.kind {
            ModelKind::DeepLinear { depth, width } => (0..depth)
                .map(|l| {
                    let rows = if l + 1 == depth { 1 } else { width };
                    let cols = if l == 0 { self.input_dim } else { width };
                    (rows, cols)
                })
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn check_params(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.param_count() {
            return Err(Error::Dimension { expected: self.param_count(), got: w.len() });
        }
        Ok(())
    }

    /// `Phi(w, x)`.
    pub fn output(&self, w: &[f64], x: &[f64]) -> f64 {
        match self.kind {
            ModelKind::Linear => dot(w, x),
            ModelKind::DeepLinear { .. } => {
                let mut h = x.to_vec();
                let mut offset = 0;
                for (rows, cols) in self.layer_shapes() {
                    let layer = &w[offset..offset + rows * cols];
                    h = (0..rows).map(|r| dot(&layer[r * cols..(r + 1) * cols], &h)).collect();
                    offset += rows * cols;
                }
                h[0]
            }
            ModelKind::TwoLayerRelu { width } => {
                let d = self.input_dim;
                (0..width)
                    .map(|k| w[k] * dot(&w[width + k * d..width + (k + 1) * d], x).max(0.0))
                    .sum()
            }
        }
    }

    /// Writes `d Phi(w, x) / d w` into `out` (length `p`). ReLU'(0) is taken as 0.
    pub fn output_grad(&self, w: &[f64], x: &[f64], out: &mut [f64]) {
        match self.kind {
            ModelKind::Linear => out.copy_from_slice(x),
            ModelKind::DeepLinear { .. } => {
                let shapes = self.layer_shapes();
                let mut acts = vec![x.to_vec()];
                let mut offsets = Vec::with_capacity(shapes.len());
                let mut offset = 0;
                for &(rows, cols) in &shapes {
                    offsets.push(offset);
                    let layer = &w[offset..offset + rows * cols];
                    let h = acts.last().unwrap();
                    let next = (0..rows).map(|r| dot(&layer[r * cols..(r + 1) * cols], h)).collect();
                    acts.push(next);
                    offset += rows * cols;
                }
                // Backward: delta_l = dPhi/dh_l.
                let mut delta = vec![1.0];
                for l in (0..shapes.len()).rev() {
                    let (rows, cols) = shapes[l];
                    let off = offsets[l];
                    let input = &acts[l];
                    for r in 0..rows {
                        for c in 0..cols {
                            out[off + r * cols + c] = delta[r] * input[c];
                        }
                    }
                    let layer = &w[off..off + rows * cols];
                    let mut prev = vec![0.0; cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            prev[c] += layer[r * cols + c] * delta[r];
                        }
                    }
                    delta = prev;
                }
            }
            ModelKind::TwoLayerRelu { width } => {
                let d = self.input_dim;
                for k in 0..width {
                    let u = &w[width + k * d..width + (k + 1) * d];
                    let pre = dot(u, x);
                    out[k] = pre.max(0.0);
                    let active = if pre > 0.0 { w[k] } else { 0.0 };
                    for j in 0..d {
                        out[width + k * d + j] = active * x[j];
                    }
                }
            }
        }
    }

    /// Signs of `<u_k, x_i>` over hidden units and points. Empty for models
    /// without kinks.
    pub fn activation_pattern(&self, w: &[f64], data: &super::Dataset) -> Vec<bool> {
        match self.kind {
            ModelKind::TwoLayerRelu { width } => {
                let d = self.input_dim;
                data.iter()
                    .flat_map(|(x, _)| (0..width).map(move |k| dot(&w[width + k * d..width + (k + 1) * d], x) > 0.0))
                    .collect()
            }
            _ => Vec::new(),
        }
    }

    /// Smallest `|<u_k, x_i>|` over hidden units and points, scaled by `||u_k|| ||x_i||`.
    /// Zero for models without kinks.
    pub fn kink_distance(&self, w: &[f64], data: &super::Dataset) -> f64 {
        match self.kind {
            ModelKind::TwoLayerRelu { width } => {
                let d = self.input_dim;
                let mut best = f64::INFINITY;
                for (x, _) in data.iter() {
                    for k in 0..width {
                        let u = &w[width + k * d..width + (k + 1) * d];
                        let denom = crate::linalg::norm(u) * crate::linalg::norm(x);
                        if denom > 0.0 {
                            best = best.min(dot(u, x).abs() / denom);
                        }
                    }
                }
                best
            }
            _ => f64::INFINITY,
        }
    }
}

/// A finite parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(i) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("parameter {i} is not finite")));
        }
        Ok(ParamVector(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        ParamVector::new(w)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Self {
        p.0
    }
}

impl std::ops::Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}
