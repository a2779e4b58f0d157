use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{evaluate, train_from_scratch, Dataset, TrainingSetup};
use crate::shapley::{order_ascending, order_descending};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalOrder {
    LowestFirst,
    HighestFirst,
    Random,
}

impl RemovalOrder {
    pub const ALL: [RemovalOrder; 3] = [
        RemovalOrder::LowestFirst,
        RemovalOrder::HighestFirst,
        RemovalOrder::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RemovalOrder::LowestFirst => "lowest-first",
            RemovalOrder::HighestFirst => "highest-first",
            RemovalOrder::Random => "random",
        }
    }
}

/// Test accuracy after retraining on what remains once a fraction of the
/// data is removed in each order. `None` marks a skipped point (nothing left
/// to train on).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalCurve {
    pub removal_fractions: Vec<f64>,
    pub lowest_first: Vec<Option<f64>>,
    pub highest_first: Vec<Option<f64>>,
    pub random: Vec<Option<f64>>,
}

impl RemovalCurve {
    pub fn series(&self, order: RemovalOrder) -> &[Option<f64>] {
        match order {
            RemovalOrder::LowestFirst => &self.lowest_first,
            RemovalOrder::HighestFirst => &self.highest_first,
            RemovalOrder::Random => &self.random,
        }
    }
}

/// Retrain from the same initialization seed for every point, so curves
/// differ only through the retained set.
pub fn point_removal_curve(
    values: &[f64],
    train: &Dataset,
    test: &Dataset,
    setup: &TrainingSetup,
    fractions: &[f64],
    seed: u64,
) -> Result<RemovalCurve> {
    let n = train.len();
    if values.len() != n {
        return Err(Error::Input(format!(
            "{} values for {n} data",
            values.len()
        )));
    }
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Input("removal fractions must lie in [0, 1]".into()));
    }
    let mut shuffled: Vec<usize> = (0..n).collect();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let orders = [order_ascending(values), order_descending(values), shuffled];

    let jobs: Vec<(usize, usize)> = (0..3)
        .flat_map(|o| (0..fractions.len()).map(move |f| (o, f)))
        .collect();
    let results: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(o, f)| {
            let removed = ((fractions[f] * n as f64).round() as usize).min(n);
            let mut kept = orders[o][removed..].to_vec();
            if kept.is_empty() {
                log::warn!("removal fraction {} leaves no data; skipped", fractions[f]);
                return Ok(None);
            }
            kept.sort_unstable();
            let model = train_from_scratch(train, &kept, setup)?;
            Ok(Some(evaluate(&model, test)?.accuracy))
        })
        .collect::<Result<_>>()?;

    let k = fractions.len();
    Ok(RemovalCurve {
        removal_fractions: fractions.to_vec(),
        lowest_first: results[..k].to_vec(),
        highest_first: results[k..2 * k].to_vec(),
        random: results[2 * k..].to_vec(),
    })
}
