//! Bundled fixtures.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::Dataset;

pub const BUNDLED: [&str; 4] = ["linear2d_iso", "linear2d_aniso", "linear3d_rand", "xor_relu"];

pub const LINEAR3D_DEFAULT_SEED: u64 = 3;

pub fn bundled(name: &str, seed: Option<u64>) -> Result<Dataset> {
    match name {
        "linear2d_iso" => linear2d_iso(),
        "linear2d_aniso" => linear2d_aniso(),
        "linear3d_rand" => linear3d_rand(seed.unwrap_or(LINEAR3D_DEFAULT_SEED)),
        "xor_relu" => xor_relu(),
        _ => Err(Error::Config(format!("unknown bundled dataset `{name}`"))),
    }
}

/// Four points, symmetric under `x -> -x` with flipped labels.
pub fn linear2d_iso() -> Result<Dataset> {
    Dataset::from_rows(&[
        vec![2.0, 0.0, 1.0],
        vec![0.0, 1.0, -1.0],
        vec![-2.0, 0.0, -1.0],
        vec![0.0, -1.0, 1.0],
    ])
}

/// Wide in the first coordinate. The Euclidean max-margin direction is held
/// by the first two points, while a conditioner that favours the first
/// coordinate moves the support to the second and third, about 16 degrees
/// away.
pub fn linear2d_aniso() -> Result<Dataset> {
    Dataset::from_rows(&[
        vec![1.2, 2.1, 1.0],
        vec![-2.0, -1.05, -1.0],
        vec![3.4, 0.0, 1.0],
        vec![-4.0, -1.5, -1.0],
    ])
}

/// Ten Gaussian points in three dimensions labelled by a random hyperplane,
/// keeping only points at least 0.2 away from it.
pub fn linear3d_rand(seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut w: Vec<f64> = (0..3).map(|_| normal()).collect();
    let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    w.iter_mut().for_each(|v| *v /= n);
    let mut rows = Vec::with_capacity(10);
    while rows.len() < 10 {
        let x: Vec<f64> = (0..3).map(|_| normal()).collect();
        let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        if s.abs() < 0.2 {
            continue;
        }
        let mut row = x;
        row.push(s.signum());
        rows.push(row);
    }
    Dataset::from_rows(&rows)
}

pub fn xor_relu() -> Result<Dataset> {
    Dataset::from_rows(&[
        vec![1.0, 1.0, 1.0],
        vec![-1.0, -1.0, 1.0],
        vec![1.0, -1.0, -1.0],
        vec![-1.0, 1.0, -1.0],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_bundled_load() {
        for name in BUNDLED {
            let d = bundled(name, None).unwrap();
            assert!(d.len() >= 4, "{name}");
        }
        assert_eq!(linear3d_rand(1).unwrap(), linear3d_rand(1).unwrap());
        assert_ne!(linear3d_rand(1).unwrap(), linear3d_rand(2).unwrap());
    }
}
