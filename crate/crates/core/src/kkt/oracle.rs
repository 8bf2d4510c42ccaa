use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::Dataset;

pub const ORACLE_MAX_POINTS: usize = 12;
pub const ORACLE_MAX_DIM: usize = 6;

const DUAL_TOL: f64 = 1e-12;
const PRIMAL_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-10;

/// Exact solution of the linear weighted max-margin problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub w_star: Vec<f64>,
    pub active_set: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub objective: f64,
}

/// Solves `min 1/2 ||s * w||^2  s.t.  y_i <w, x_i> >= 1` by enumerating
/// candidate active sets.
///
/// With `u = s * w` and `z_i = y_i x_i / s` the problem is a plain hard-margin
/// SVM in `u`. For an active set `A` with independent `z_A`, stationarity and
/// tightness give `G alpha = 1` with `G = Z_A Z_A^T`, and `u = Z_A^T alpha`.
/// A candidate is kept if `alpha >= 0` and every constraint holds; the
/// smallest objective wins, earlier sets in (size, lexicographic) order
/// winning ties.
pub fn svm_oracle(data: &Dataset, scaling: &[f64]) -> Result<OracleSolution> {
    let (n, d) = (data.len(), data.dim());
    if n > ORACLE_MAX_POINTS || d > ORACLE_MAX_DIM {
        return Err(Error::Config(format!(
            "oracle supports at most {ORACLE_MAX_POINTS} points in {ORACLE_MAX_DIM} dimensions, got {n} in {d}"
        )));
    }
    if scaling.len() != d {
        return Err(Error::Dimension { expected: d, got: scaling.len() });
    }
    if let Some(s) = scaling.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::Config(format!("scaling must be componentwise positive, found {s}")));
    }
    let z: Vec<Vec<f64>> = data
        .iter()
        .map(|(x, y)| x.iter().zip(scaling).map(|(xi, s)| y * xi / s).collect())
        .collect();

    // (objective, active set, multipliers on the set, w)
    type Candidate = (f64, Vec<usize>, Vec<f64>, Vec<f64>);
    let mut best: Option<Candidate> = None;
    for size in 1..=n.min(d) {
        for set in Combinations::new(n, size) {
            let Some((alpha, u)) = solve_active(&z, &set) else { continue };
            if alpha.iter().any(|a| *a < -DUAL_TOL) {
                continue;
            }
            if z.iter().any(|zi| dot(zi, &u) < 1.0 - PRIMAL_TOL) {
                continue;
            }
            let obj = 0.5 * dot(&u, &u);
            let better = match &best {
                None => true,
                Some((b, ..)) => obj < b - 1e-12 * b.abs(),
            };
            if better {
                best = Some((obj, set, alpha, u));
            }
        }
    }
    let (objective, active_set, alpha, u) =
        best.ok_or_else(|| Error::NoSolution("data are not linearly separable".into()))?;
    let mut lambdas = vec![0.0; n];
    for (k, &i) in active_set.iter().enumerate() {
        lambdas[i] = alpha[k].max(0.0);
    }
    let w_star = u.iter().zip(scaling).map(|(ui, s)| ui / s).collect();
    Ok(OracleSolution { w_star, active_set, lambdas, objective })
}

fn solve_active(z: &[Vec<f64>], set: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
    let k = set.len();
    let gram = DMatrix::from_fn(k, k, |a, b| dot(&z[set[a]], &z[set[b]]));
    let chol = gram.cholesky()?;
    let diag = chol.l().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
    if !(lo > PIVOT_TOL * hi) {
        return None;
    }
    let alpha = chol.solve(&DVector::from_element(k, 1.0));
    let dim = z[0].len();
    let mut u = vec![0.0; dim];
    for (a, &i) in set.iter().enumerate() {
        for (uj, zj) in u.iter_mut().zip(&z[i]) {
            *uj += alpha[a] * zj;
        }
    }
    Some((alpha.iter().copied().collect(), u))
}

/// k-subsets of `0..n` in lexicographic order.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations { n, idx: (0..k).collect(), done: k > n }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}
