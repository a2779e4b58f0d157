//! Interval-based per-class subset selection with min-max weighted training.
//!
//! At every epoch `k` with `k mod R == 0` (epoch 0 included) the subset is
//! rebuilt: each class keeps its `⌈a·N_c⌉` highest-valued members (valued
//! with a class-restricted reference vector), then the union is valued again
//! as one game and its values are min-max normalized into training weights.
//! Between selection events the standing subset and weights are reused.

use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    evaluate, init_model, per_example_loss_and_grad, train_epoch, Dataset, ModelState,
    TrainingSetup,
};
use crate::utility::{scheme_shapley, GradientSet, UtilityKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub setup: TrainingSetup,
    /// Fraction `a ∈ (0, 1]` of each class kept at a selection event.
    pub fraction: f64,
    /// Epochs between selection events (`R`).
    pub interval: usize,
    pub scheme: UtilityKind,
    /// Train the selected subset with unit weights instead of min-max weights.
    pub uniform_weights: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            setup: TrainingSetup::default(),
            fraction: 0.1,
            interval: 20,
            scheme: UtilityKind::Chg,
            uniform_weights: false,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        self.setup.validate()?;
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Input(format!(
                "fraction {} must lie in (0, 1]",
                self.fraction
            )));
        }
        if self.interval == 0 {
            return Err(Error::Input("selection interval must be at least 1".into()));
        }
        Ok(())
    }
}

/// Number of members kept from a class of size `class_len`: `⌈a·N_c⌉`.
pub fn selected_count(fraction: f64, class_len: usize) -> usize {
    if class_len == 0 {
        return 0;
    }
    // absorb representation error such as 0.1·30 = 3.0000000000000004
    let raw = fraction * class_len as f64;
    let k = (raw - raw.abs() * 1e-12).ceil() as usize;
    k.clamp(1, class_len)
}

/// Per class, the `⌈a·N_c⌉` highest-valued indices (ties to the lower
/// index); returns the sorted union. Each entry pairs a class's dataset
/// indices with their values.
pub fn select_top_fraction_per_class(
    values_by_class: &[(Vec<usize>, Vec<f64>)],
    fraction: f64,
) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (c, (indices, values)) in values_by_class.iter().enumerate() {
        if indices.len() != values.len() {
            return Err(Error::Input(format!(
                "class {c}: {} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.is_empty() {
            log::warn!("class {c} is empty; skipped during selection");
            continue;
        }
        let k = selected_count(fraction, indices.len());
        // ties resolve by dataset index, not by position in the class list
        let mut order: Vec<usize> = (0..indices.len()).collect();
        order.sort_by(|&a, &b| {
            values[b]
                .total_cmp(&values[a])
                .then(indices[a].cmp(&indices[b]))
        });
        out.extend(order.into_iter().take(k).map(|p| indices[p]));
    }
    out.sort_unstable();
    Ok(out)
}

/// `w_i = (φ_i − min)/(max − min)`; all ones when every value is equal.
pub fn minmax_weights(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if span.is_nan() || span <= 0.0 || !span.is_finite() {
        return vec![1.0; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - min) / span).clamp(0.0, 1.0))
        .collect()
}

/// One subset (re)selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEvent {
    pub epoch: usize,
    /// Selected dataset indices per class, ascending.
    pub per_class: Vec<Vec<usize>>,
    /// Weights aligned with the sorted union of `per_class`.
    pub weights: Vec<f64>,
    pub weight_min: f64,
    pub weight_max: f64,
    pub weight_mean: f64,
}

impl SelectionEvent {
    fn new(
        epoch: usize,
        subset: &[usize],
        labels: &[usize],
        classes: usize,
        weights: Vec<f64>,
    ) -> Self {
        let mut per_class = vec![Vec::new(); classes];
        for &i in subset {
            per_class[labels[i]].push(i);
        }
        let n = weights.len().max(1) as f64;
        SelectionEvent {
            epoch,
            per_class,
            weight_min: weights.iter().copied().fold(f64::INFINITY, f64::min),
            weight_max: weights.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            weight_mean: weights.iter().sum::<f64>() / n,
            weights,
        }
    }

    /// The selected indices, ascending.
    pub fn subset(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.per_class.iter().flatten().copied().collect();
        s.sort_unstable();
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean loss over the full training set after the epoch.
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub events: Vec<SelectionEvent>,
    pub metrics: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub model: ModelState,
    pub history: TrainingHistory,
    /// Epoch at which training produced a non-finite loss; the history
    /// stops there.
    pub diverged_at: Option<usize>,
}

impl TrainingOutcome {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.history.metrics.last().map(|m| m.test_accuracy)
    }
}

/// Values of `indices` (one game, `α` over `indices`) at the current model.
fn values_at(
    model: &ModelState,
    data: &Dataset,
    indices: &[usize],
    kind: UtilityKind,
) -> Result<Vec<f64>> {
    let batch = per_example_loss_and_grad(model, data, indices)?;
    let gs = GradientSet::new(batch.last_layer_grads, batch.losses, false)?;
    Ok(scheme_shapley(&gs, kind)?.values)
}

fn chg_selection(
    model: &ModelState,
    data: &Dataset,
    cfg: &SelectionConfig,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let per_class: Vec<(Vec<usize>, Vec<f64>)> = data
        .class_index()
        .par_iter()
        .map(|idx| {
            let values = if idx.is_empty() {
                Vec::new()
            } else {
                values_at(model, data, idx, cfg.scheme)?
            };
            Ok((idx.clone(), values))
        })
        .collect::<Result<_>>()?;
    let subset = select_top_fraction_per_class(&per_class, cfg.fraction)?;
    let weights = if cfg.uniform_weights {
        vec![1.0; subset.len()]
    } else {
        minmax_weights(&values_at(model, data, &subset, cfg.scheme)?)
    };
    Ok((subset, weights))
}

/// How a training run picks its subset at each selection event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsetPolicy {
    /// Per-class Shapley top fraction with min-max weights.
    Chg,
    /// One uniform subset drawn at epoch 0 and kept.
    Random,
    /// A fresh uniform subset at every selection event.
    AdaptiveRandom,
}

/// Size of every subset drawn for `data` under `fraction`.
pub fn subset_size(data: &Dataset, fraction: f64) -> usize {
    data.class_index()
        .iter()
        .map(|c| selected_count(fraction, c.len()))
        .sum()
}

fn random_subset(data: &Dataset, fraction: f64, seed: u64, draw: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5e1e_c7ed_0001);
    rng.set_stream(draw);
    let k = subset_size(data, fraction).min(data.len());
    let mut s = sample(&mut rng, data.len(), k).into_vec();
    s.sort_unstable();
    s
}

/// Interval-based selection training.
///
/// `test` supplies the accuracy recorded per epoch; without it the training
/// set is scored.
pub fn run_selection_training(
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &SelectionConfig,
) -> Result<TrainingOutcome> {
    run_policy(data, test, cfg, SubsetPolicy::Chg)
}

/// Uniform-subset baselines (unweighted) with the same subset size as
/// [`run_selection_training`].
pub fn random_baseline_training(
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &SelectionConfig,
    adaptive: bool,
) -> Result<TrainingOutcome> {
    let policy = if adaptive {
        SubsetPolicy::AdaptiveRandom
    } else {
        SubsetPolicy::Random
    };
    run_policy(data, test, cfg, policy)
}

pub fn run_policy(
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &SelectionConfig,
    policy: SubsetPolicy,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Input("cannot train on an empty dataset".into()));
    }
    let eval = test.unwrap_or(data);
    let mut model = init_model(data.shape(), &cfg.setup.model_config())?;
    let tc = cfg.setup.train_config();
    let mut history = TrainingHistory::default();
    let mut subset: Vec<usize> = Vec::new();
    let mut weights: Option<Vec<f64>> = None;
    let mut draws = 0u64;

    for epoch in 0..cfg.setup.epochs {
        let start = Instant::now();
        if epoch % cfg.interval == 0 {
            let reselected = match policy {
                SubsetPolicy::Chg => {
                    match chg_selection(&model, data, cfg) {
                        Ok((s, w)) => {
                            subset = s;
                            weights = Some(w);
                        }
                        Err(Error::Numeric(_)) => {
                            return Ok(TrainingOutcome {
                                model,
                                history,
                                diverged_at: Some(epoch),
                            })
                        }
                        Err(e) => return Err(e),
                    }
                    true
                }
                SubsetPolicy::Random => {
                    if draws == 0 {
                        subset = random_subset(data, cfg.fraction, cfg.setup.seed, 0);
                        draws += 1;
                    }
                    epoch == 0
                }
                SubsetPolicy::AdaptiveRandom => {
                    subset = random_subset(data, cfg.fraction, cfg.setup.seed, draws);
                    draws += 1;
                    true
                }
            };
            if reselected {
                let w = weights.clone().unwrap_or_else(|| vec![1.0; subset.len()]);
                history.events.push(SelectionEvent::new(
                    epoch,
                    &subset,
                    data.labels(),
                    data.classes(),
                    w,
                ));
            }
        }

        train_epoch(&mut model, data, &subset, weights.as_deref(), &tc, epoch)?;
        let train = match evaluate(&model, data) {
            Ok(m) if m.loss.is_finite() => m,
            Ok(_) | Err(Error::Numeric(_)) => {
                return Ok(TrainingOutcome {
                    model,
                    history,
                    diverged_at: Some(epoch),
                })
            }
            Err(e) => return Err(e),
        };
        let test_accuracy = if test.is_some() {
            evaluate(&model, eval)?.accuracy
        } else {
            train.accuracy
        };
        history.metrics.push(EpochMetrics {
            epoch,
            train_loss: train.loss,
            test_accuracy,
            wall_time: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainingOutcome {
        model,
        history,
        diverged_at: None,
    })
}
