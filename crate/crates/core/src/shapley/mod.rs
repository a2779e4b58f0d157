//! Shapley values for set-function games.
//!
//! Three routes are provided:
//!
//! * [`exact_shapley`] enumerates every coalition (the oracle, `O(2^n)`),
//! * [`permutation_shapley`] averages marginals over sampled orderings,
//! * [`chg_closed_form_shapley`] evaluates the `O(n·d)` closed form for the
//!   quadratic gradient-matching utility `U(S) = ||α||² − ||mean_S x − α||²`.
//!
//! Every game uses the convention `U(∅) = 0`; [`Game::utility`] is never
//! called with an empty coalition.

mod closed_form;
mod exact;
mod games;
mod harmonic;
mod permutation;

use serde::{Deserialize, Serialize};

pub use closed_form::{chg_closed_form_shapley, shapley_linear_term, ClosedFormCoefficients};
pub use exact::{exact_shapley, DEFAULT_EXACT_LIMIT};
pub use games::{ChgGame, FnGame, LinearTermGame, QuadraticTermGame};
pub use harmonic::HarmonicSums;
pub use permutation::permutation_shapley;

/// A cooperative game over players `0..players()`.
pub trait Game: Sync {
    fn players(&self) -> usize;

    /// Utility of a non-empty coalition given as ascending player indices.
    fn utility(&self, coalition: &[usize]) -> f64;
}

/// How a [`ShapleyValues`] vector was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Exact,
    PermutationMc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyValues {
    pub values: Vec<f64>,
    pub method: Method,
}

impl ShapleyValues {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Compensated sum of all values; equals `U(N)` by efficiency.
    pub fn total(&self) -> f64 {
        crate::linalg::stable_sum(self.values.iter().copied())
    }
}

/// 1-based ranks by descending value; ties go to the lower index first.
pub fn rank_descending(values: &[f64]) -> Vec<usize> {
    let order = order_descending(values);
    let mut ranks = vec![0; values.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

/// Indices sorted by descending value, ties by ascending index.
pub fn order_descending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Indices sorted by ascending value, ties by ascending index.
pub fn order_ascending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

/// Write values one per line with 17 significant digits.
pub fn write_fixture(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 25);
    for v in values {
        s.push_str(&format!("{v:.16e}\n"));
    }
    s
}

pub fn read_fixture(text: &str) -> crate::Result<Vec<f64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| crate::Error::Input(format!("bad fixture line {l:?}: {e}")))
        })
        .collect()
}
