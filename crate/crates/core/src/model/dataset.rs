use std::io::Read;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fmt::fmt_f64;

/// Labeled training points `(x_i, y_i)` with `y_i` in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Dataset("dataset must contain at least one point".into()));
        }
        if xs.len() != ys.len() {
            return Err(Error::Dataset(format!(
                "{} inputs but {} labels",
                xs.len(),
                ys.len()
            )));
        }
        let dim = xs[0].len();
        if dim == 0 {
            return Err(Error::Dataset("inputs must have dimension >= 1".into()));
        }
        for (i, (x, &y)) in xs.iter().zip(&ys).enumerate() {
            if x.len() != dim {
                return Err(Error::Dataset(format!(
                    "point {i} has dimension {} but point 0 has {dim}",
                    x.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Dataset(format!("point {i} has a non-finite coordinate")));
            }
            if y != 1.0 && y != -1.0 {
                return Err(Error::Dataset(format!("point {i} has label {y}; labels must be -1 or 1")));
            }
        }
        for i in 0..xs.len() {
            for j in (i + 1)..xs.len() {
                if ys[i] != ys[j] && xs[i] == xs[j] {
                    return Err(Error::Dataset(format!(
                        "points {i} and {j} are identical with opposite labels (not separable)"
                    )));
                }
            }
        }
        Ok(Dataset { xs, ys, dim })
    }

    /// Builds a dataset from rows laid out as `[x1, ..., xd, y]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let mut xs = Vec::with_capacity(rows.len());
        let mut ys = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() < 2 {
                return Err(Error::Dataset(format!("row {i} needs at least one feature and a label")));
            }
            let (x, y) = row.split_at(row.len() - 1);
            xs.push(x.to_vec());
            ys.push(y[0]);
        }
        Dataset::new(xs, ys)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.ys[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.xs.iter().map(|x| x.as_slice()).zip(self.ys.iter().copied())
    }

    pub fn max_norm(&self) -> f64 {
        self.xs
            .iter()
            .map(|x| crate::linalg::norm(x))
            .fold(0.0, f64::max)
    }

    /// Reads the `x1,...,xd,y` CSV format.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Dataset(format!("cannot read CSV header: {e}")))?
            .clone();
        let d = headers.len().saturating_sub(1);
        if d == 0 {
            return Err(Error::Dataset("CSV header must be x1,...,xd,y".into()));
        }
        for (k, h) in headers.iter().enumerate() {
            let expected = if k == d { "y".to_string() } else { format!("x{}", k + 1) };
            if h != expected {
                return Err(Error::Dataset(format!(
                    "CSV header column {} is `{h}`, expected `{expected}`",
                    k + 1
                )));
            }
        }
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Dataset(format!("CSV row {}: {e}", line + 1)))?;
            if rec.len() != d + 1 {
                return Err(Error::Dataset(format!(
                    "CSV row {} has {} fields, expected {}",
                    line + 1,
                    rec.len(),
                    d + 1
                )));
            }
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::Dataset(format!("CSV row {}: `{f}`: {e}", line + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Dataset::from_rows(&rows)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Dataset::from_csv_reader(file)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for k in 0..self.dim {
            out.push_str(&format!("x{},", k + 1));
        }
        out.push_str("y\n");
        for (x, y) in self.iter() {
            for v in x {
                out.push_str(&fmt_f64(*v));
                out.push(',');
            }
            out.push_str(&fmt_f64(y));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the canonical CSV rendering.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv().as_bytes()))
    }

    /// Returns a copy with every feature vector multiplied componentwise by `scale`.
    pub fn scale_features(&self, scale: &[f64]) -> Result<Dataset> {
        if scale.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: scale.len() });
        }
        let xs = self
            .xs
            .iter()
            .map(|x| x.iter().zip(scale).map(|(a, b)| a * b).collect())
            .collect();
        Dataset::new(xs, self.ys.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let d = Dataset::from_rows(&[vec![1.0, 0.5, 1.0], vec![-2.0, 0.25, -1.0]]).unwrap();
        let text = d.to_csv();
        assert!(text.starts_with("x1,x2,y\n"));
        let back = Dataset::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn rejects_bad_label() {
        let err = Dataset::from_csv_reader("x1,y\n1,0\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("label"));
    }

    #[test]
    fn rejects_conflicting_duplicates() {
        let err = Dataset::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap_err();
        assert!(err.to_string().contains("opposite labels"));
    }

    #[test]
    fn rejects_ragged_and_bad_header() {
        assert!(Dataset::new(vec![vec![1.0], vec![1.0, 2.0]], vec![1.0, 1.0]).is_err());
        assert!(Dataset::from_csv_reader("a,y\n1,1\n".as_bytes()).is_err());
        assert!(Dataset::new(vec![], vec![]).is_err());
    }
}
