use serde::{Deserialize, Serialize};

use super::NoiseSpec;
use crate::error::{Error, Result};
use crate::shapley::order_ascending;

/// Noisy-point discovery curve: inspecting data from the lowest value up,
/// what fraction of the corrupted points has been found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub fraction_inspected: Vec<f64>,
    pub detection_rate: Vec<f64>,
    /// Trapezoidal area under `detection_rate` over `fraction_inspected`.
    pub auc: f64,
    /// The curve of a detector that ignores the values (the diagonal).
    pub random_baseline: Vec<f64>,
}

/// `0, 0.01, …, 1`.
pub fn default_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

pub fn detection_curve(values: &[f64], noise: &NoiseSpec, grid: &[f64]) -> Result<DetectionReport> {
    let n = values.len();
    if noise.flip_mask.len() != n {
        return Err(Error::Input(format!(
            "{} values but a noise mask of {}",
            n,
            noise.flip_mask.len()
        )));
    }
    let total = noise.flipped();
    if total == 0 {
        return Err(Error::Domain("no noisy points to detect".into()));
    }
    if grid.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(Error::Input(
            "inspection fractions must lie in [0, 1]".into(),
        ));
    }
    let mut fractions: Vec<f64> = grid.to_vec();
    fractions.extend([0.0, 1.0]);
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();

    // found[k] = noisy points among the k lowest-valued
    let order = order_ascending(values);
    let mut found = Vec::with_capacity(n + 1);
    found.push(0usize);
    for &i in &order {
        found.push(found.last().unwrap() + noise.flip_mask[i] as usize);
    }
    let detection_rate: Vec<f64> = fractions
        .iter()
        .map(|q| found[((q * n as f64).round() as usize).min(n)] as f64 / total as f64)
        .collect();
    let auc = fractions
        .windows(2)
        .zip(detection_rate.windows(2))
        .map(|(q, r)| (q[1] - q[0]) * (r[0] + r[1]) / 2.0)
        .sum();
    Ok(DetectionReport {
        random_baseline: fractions.clone(),
        fraction_inspected: fractions,
        detection_rate,
        auc,
    })
}
