use crate::error::{Error, Result};
use crate::kkt::{svm_oracle, ORACLE_MAX_DIM, ORACLE_MAX_POINTS};
use crate::linalg::{dot, norm};
use crate::model::{Dataset, ModelKind, ModelSpec};

const PERCEPTRON_EPOCHS: usize = 10_000;

/// Refuses training sets that the model cannot separate.
///
/// Linear and deep-linear predictors are linear in `x`, so separability is
/// linear separability: decided exactly by the oracle on small instances and
/// by a bounded perceptron otherwise. The bias-free two-layer ReLU network
/// is positively homogeneous in `x`, so it cannot separate a point at the
/// origin or two opposite-label points on the same ray; otherwise a wide
/// enough network separates the set.
pub fn check_separable(model: &ModelSpec, data: &Dataset) -> Result<()> {
    let refuse = |why: String| {
        Err(Error::Assumption(format!(
            "training data are not separable by this model ({why}); set dataset.allow_nonseparable = true to run anyway"
        )))
    };
    match model.kind {
        ModelKind::Linear | ModelKind::DeepLinear { .. } => {
            if data.len() <= ORACLE_MAX_POINTS && data.dim() <= ORACLE_MAX_DIM {
                return match svm_oracle(data, &vec![1.0; data.dim()]) {
                    Ok(_) => Ok(()),
                    Err(Error::NoSolution(_)) => refuse("no separating hyperplane through the origin".into()),
                    Err(e) => Err(e),
                };
            }
            if perceptron(data) {
                Ok(())
            } else {
                refuse(format!("perceptron did not converge in {PERCEPTRON_EPOCHS} epochs"))
            }
        }
        ModelKind::TwoLayerRelu { .. } => {
            for i in 0..data.len() {
                let xi = data.x(i);
                if norm(xi) == 0.0 {
                    return refuse(format!("point {i} is the origin"));
                }
                for j in i + 1..data.len() {
                    let xj = data.x(j);
                    if data.y(i) != data.y(j) {
                        let c = dot(xi, xj) / (norm(xi) * norm(xj));
                        if c > 1.0 - 1e-12 {
                            return refuse(format!("points {i} and {j} lie on one ray with opposite labels"));
                        }
                    }
                }
            }
            Ok(())
        }
    }
}

fn perceptron(data: &Dataset) -> bool {
    let mut w = vec![0.0; data.dim()];
    for _ in 0..PERCEPTRON_EPOCHS {
        let mut clean = true;
        for (x, y) in data.iter() {
            if y * dot(&w, x) <= 0.0 {
                clean = false;
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += y * xj;
                }
            }
        }
        if clean {
            return true;
        }
    }
    false
}
