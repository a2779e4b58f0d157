use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{exact_shapley, ChgGame, HarmonicSums, LinearTermGame, Method, ShapleyValues};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq, stable_sum, Matrix};

/// Scalar coefficients of the closed-form Shapley value for
/// `U(S) = ||α||² − ||mean_S x − α||²`. With `g = Σ_i x_i` and
/// `Q = Σ_i ||x_i||²`:
///
/// ```text
/// φ_j = self_sq·||x_j||² + cross_total·⟨g, x_j⟩ + total_sq·||g||²
///     + sum_of_sq·Q + alpha_self·⟨x_j, α⟩ + alpha_total·⟨g, α⟩
/// ```
///
/// Only `self_sq`, `cross_total` and `alpha_self` depend on `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormCoefficients {
    pub n: usize,
    pub self_sq: f64,
    pub cross_total: f64,
    pub total_sq: f64,
    pub sum_of_sq: f64,
    pub alpha_self: f64,
    pub alpha_total: f64,
}

impl ClosedFormCoefficients {
    /// Defined for `n ≥ 3`; smaller games go through [`exact_shapley`].
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Domain(format!(
                "closed-form coefficients need n >= 3, got {n}"
            )));
        }
        let HarmonicSums { h1, h2, .. } = HarmonicSums::new(n)?;
        // the Σ_{k=2..n} sums that appear in the Σ||x_i||² group
        let h1_tail = h1 - 1.0;
        let h2_tail = h2 - 1.0;

        let nf = n as f64;
        let n1 = nf * (nf - 1.0);
        let n12 = n1 * (nf - 2.0);
        let inv_n = 1.0 / nf;

        // shared numerator 2·h1 − 2·h2 − 1 + 1/n
        let pair = 2.0 * h1 - 2.0 * h2 - 1.0 + inv_n;

        let self_sq = -h2 / nf + (2.0 * h1 - 3.0 * h2 + inv_n) / n1 + 2.0 * pair / n12;
        let cross_total = -2.0 * (h1 - h2 - inv_n + inv_n * inv_n) / ((nf - 1.0) * (nf - 2.0));
        let total_sq = pair / n12;
        let sum_of_sq = (h2 - inv_n) / n1 - (2.0 * h1_tail - 2.0 * h2_tail - 1.0 + inv_n) / n12;
        let alpha_self = 2.0 * (h1 - inv_n) / (nf - 1.0);
        let alpha_total = -2.0 * (h1 - 1.0) / n1;

        Ok(ClosedFormCoefficients {
            n,
            self_sq,
            cross_total,
            total_sq,
            sum_of_sq,
            alpha_self,
            alpha_total,
        })
    }
}

fn validate(x: &Matrix, alpha: &[f64]) -> Result<()> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::Input(format!(
            "need at least one player and one dimension, got {}×{}",
            x.rows(),
            x.cols()
        )));
    }
    if alpha.len() != x.cols() {
        return Err(Error::Input(format!(
            "alpha has dimension {}, vectors have {}",
            alpha.len(),
            x.cols()
        )));
    }
    if !x.is_finite() || alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite entries in x or alpha".into()));
    }
    Ok(())
}

/// Shapley values of every row of `x` under `U(S) = ||α||² − ||mean_S x − α||²`
/// in `O(n·d)`.
///
/// Games with fewer than three players are enumerated exactly instead.
pub fn chg_closed_form_shapley(x: &Matrix, alpha: &[f64]) -> Result<ShapleyValues> {
    validate(x, alpha)?;
    let n = x.rows();
    if n < 3 {
        return exact_shapley(&ChgGame { x, alpha }, n);
    }
    let c = ClosedFormCoefficients::new(n)?;

    let g = x.column_sums();
    let q = stable_sum(x.iter_rows().map(norm_sq));
    let shared = c.total_sq * norm_sq(&g) + c.sum_of_sq * q + c.alpha_total * dot(&g, alpha);

    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let xj = x.row(j);
            c.self_sq * norm_sq(xj)
                + c.cross_total * dot(&g, xj)
                + c.alpha_self * dot(xj, alpha)
                + shared
        })
        .collect();

    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "closed form produced a non-finite value".into(),
        ));
    }
    Ok(ShapleyValues {
        values,
        method: Method::ClosedForm,
    })
}

/// Shapley values of the linear part `U₂(S) = 2⟨mean_S x, α⟩` alone.
///
/// `φ_j = 2·(H_{n−1}/(n−1))·⟨x_j, α⟩ − 2·((H_n − 1)/(n−1))·⟨mean x, α⟩`.
pub fn shapley_linear_term(x: &Matrix, alpha: &[f64]) -> Result<ShapleyValues> {
    validate(x, alpha)?;
    let n = x.rows();
    if n < 2 {
        return exact_shapley(&LinearTermGame { x, alpha }, n);
    }
    let nf = n as f64;
    let h_prev = HarmonicSums::new(n - 1)?.h1;
    let h_tail = HarmonicSums::new(n)?.h1 - 1.0;

    let own = 2.0 * h_prev / (nf - 1.0);
    let mean_alpha = dot(&x.column_sums(), alpha) / nf;
    let shared = -2.0 * h_tail / (nf - 1.0) * mean_alpha;

    let values = x
        .iter_rows()
        .map(|xj| own * dot(xj, alpha) + shared)
        .collect();
    Ok(ShapleyValues {
        values,
        method: Method::ClosedForm,
    })
}
