use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist_sq, norm_sq};
use crate::model::{batch_loss, per_example_loss_and_grad, Dataset, ModelState};

/// Both sides of `f(θ − x/L) ≤ f(θ) − (1/2L)(||∇f(θ)||² − ||∇f(θ) − x||²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub const DESCENT_TOLERANCE: f64 = 1e-9;

/// The quadratic `f(θ) = ½L||θ||²`, where the bound is tight: `holds` reports
/// equality within `1e-9` (relative to `max(1, |lhs|)`).
pub fn descent_bound_check(lipschitz: f64, theta: &[f64], x: &[f64]) -> Result<DescentCheck> {
    if lipschitz.is_nan() || lipschitz <= 0.0 || !lipschitz.is_finite() {
        return Err(Error::Domain(format!(
            "L must be positive, got {lipschitz}"
        )));
    }
    if theta.len() != x.len() {
        return Err(Error::Input("theta and x differ in dimension".into()));
    }
    let eta = 1.0 / lipschitz;
    let f = |t: &[f64]| 0.5 * lipschitz * norm_sq(t);
    let grad: Vec<f64> = theta.iter().map(|t| lipschitz * t).collect();
    let stepped: Vec<f64> = theta.iter().zip(x).map(|(t, v)| t - eta * v).collect();
    let lhs = f(&stepped);
    let rhs = f(theta) - eta / 2.0 * (norm_sq(&grad) - dist_sq(&grad, x));
    let holds = (lhs - rhs).abs() <= DESCENT_TOLERANCE * lhs.abs().max(1.0);
    Ok(DescentCheck { lhs, rhs, holds })
}

/// Upper bound on the gradient Lipschitz constant of the mean softmax
/// cross-entropy over the head parameters: `½·max_i(||h_i||² + 1)`, since the
/// logit Hessian of cross-entropy is bounded by `½I`.
pub fn softmax_lipschitz_bound(model: &ModelState, data: &Dataset) -> f64 {
    let max_sq = data
        .features()
        .iter_rows()
        .map(|x| norm_sq(&model.head_input(x)))
        .fold(0.0, f64::max);
    0.5 * (max_sq + 1.0)
}

/// The inequality for full-batch softmax cross-entropy at the model's
/// parameters, stepping along `x` with `η = 1/L`.
pub fn softmax_descent_check(
    model: &ModelState,
    data: &Dataset,
    x: &[f64],
    lipschitz: f64,
) -> Result<DescentCheck> {
    if lipschitz.is_nan() || lipschitz <= 0.0 {
        return Err(Error::Domain(format!(
            "L must be positive, got {lipschitz}"
        )));
    }
    if x.len() != model.parameter_count() {
        return Err(Error::Input("direction has the wrong dimension".into()));
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let r = per_example_loss_and_grad(model, data, &all)?;
    let grad = r.last_layer_grads.column_means();
    let f0 = batch_loss(model, data, &all)?;

    let eta = 1.0 / lipschitz;
    let mut stepped = model.clone();
    let params: Vec<f64> = model
        .parameters()
        .iter()
        .zip(x)
        .map(|(p, v)| p - eta * v)
        .collect();
    stepped.set_parameters(&params)?;
    let lhs = batch_loss(&stepped, data, &all)?;
    let rhs = f0 - eta / 2.0 * (norm_sq(&grad) - dist_sq(&grad, x));
    Ok(DescentCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + DESCENT_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_along_gradient() {
        let theta = [1.0, -2.0, 0.5];
        let l = 3.0;
        let grad: Vec<f64> = theta.iter().map(|t| l * t).collect();
        let c = descent_bound_check(l, &theta, &grad).unwrap();
        let f = 0.5 * l * norm_sq(&theta);
        assert!((c.rhs - (f - norm_sq(&grad) / (2.0 * l))).abs() < 1e-12);
        assert!(c.holds);
    }

    #[test]
    fn zero_direction() {
        let c = descent_bound_check(2.0, &[0.3, 0.4], &[0.0, 0.0]).unwrap();
        assert_eq!(c.lhs, 0.25);
        assert_eq!(c.rhs, 0.25);
        assert!(c.holds);
    }

    #[test]
    fn rejects_non_positive_l() {
        assert!(descent_bound_check(0.0, &[1.0], &[1.0]).is_err());
    }
}
