//! Per-epoch closed-form valuation during a single training run.
//!
//! Each epoch the current model's losses and last-layer gradients are taken
//! for every datum, the scheme's Shapley values are computed from them, and
//! only then is the model trained for one epoch. The reported value of a
//! datum is the mean over epochs.

use std::borrow::Cow;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{stable_sum, Matrix};
use crate::model::{init_model, per_example_loss_and_grad, train_epoch, Dataset, TrainingSetup};
use crate::utility::{scheme_shapley, subset_utility, GradientSet, UtilityKind, UtilityScheme};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValuationConfig {
    pub setup: TrainingSetup,
    pub scheme: UtilityKind,
    /// Value each class separately with a class-restricted reference vector.
    pub per_class: bool,
    /// Epochs excluded from the mean (still recorded).
    pub skip_first_epochs: usize,
}

impl Default for ValuationConfig {
    fn default() -> Self {
        ValuationConfig {
            setup: TrainingSetup::default(),
            scheme: UtilityKind::Chg,
            per_class: false,
            skip_first_epochs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationRun {
    /// `epochs × n`; row `k` holds the values measured at the start of epoch `k`.
    pub per_epoch_values: Matrix,
    pub mean_values: Vec<f64>,
    /// `U(N)` per epoch (summed over classes in per-class mode).
    pub per_epoch_utility: Vec<f64>,
    /// Mean training loss measured at each valuation point.
    pub per_epoch_loss: Vec<f64>,
    pub per_epoch_seconds: Vec<f64>,
    pub config: ValuationConfig,
}

impl ValuationRun {
    pub fn epochs(&self) -> usize {
        self.per_epoch_values.rows()
    }
}

/// Shapley values of one gradient snapshot, with the game's `U(N)`.
///
/// With `classes`, each group is valued as its own game (its own `α`) and
/// `U(N)` is the sum of the groups' grand-coalition utilities.
pub fn value_gradient_set(
    gs: &GradientSet,
    kind: UtilityKind,
    classes: Option<&[Vec<usize>]>,
) -> Result<(Vec<f64>, f64)> {
    let whole = [(0..gs.len()).collect::<Vec<_>>()];
    let groups = classes.unwrap_or(&whole);
    let mut values = vec![0.0; gs.len()];
    let mut utility = 0.0;
    for group in groups.iter().filter(|g| !g.is_empty()) {
        let sub = match classes {
            Some(_) => Cow::Owned(gs.subset(group)?),
            None => Cow::Borrowed(gs),
        };
        let v = scheme_shapley(&sub, kind)?;
        for (&i, phi) in group.iter().zip(v.values) {
            values[i] = phi;
        }
        let scheme = UtilityScheme::for_set(&sub, kind)?;
        let all: Vec<usize> = (0..sub.len()).collect();
        utility += subset_utility(&scheme, &sub, &all)?;
    }
    Ok((values, utility))
}

pub fn run_valuation(data: &Dataset, cfg: &ValuationConfig) -> Result<ValuationRun> {
    cfg.setup.validate()?;
    if data.is_empty() {
        return Err(Error::Input("cannot value an empty dataset".into()));
    }
    let epochs = cfg.setup.epochs;
    if cfg.skip_first_epochs >= epochs {
        return Err(Error::Input(format!(
            "skip_first_epochs {} leaves no epochs out of {epochs}",
            cfg.skip_first_epochs
        )));
    }

    let mut model = init_model(data.shape(), &cfg.setup.model_config())?;
    let tc = cfg.setup.train_config();
    let all: Vec<usize> = (0..data.len()).collect();
    let classes = cfg.per_class.then(|| data.class_index());

    let mut per_epoch = Matrix::zeros(epochs, data.len());
    let mut utilities = Vec::with_capacity(epochs);
    let mut losses = Vec::with_capacity(epochs);
    let mut seconds = Vec::with_capacity(epochs);

    for epoch in 0..epochs {
        let start = Instant::now();
        let batch = per_example_loss_and_grad(&model, data, &all).map_err(|e| match e {
            Error::Numeric(reason) => Error::Diverged { epoch, reason },
            other => other,
        })?;
        let mean_loss = stable_sum(batch.losses.iter().copied()) / data.len() as f64;
        if !mean_loss.is_finite() || !batch.last_layer_grads.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: "non-finite loss or gradient".into(),
            });
        }
        let gs = GradientSet::new(batch.last_layer_grads, batch.losses, false)?;
        let (values, utility) =
            value_gradient_set(&gs, cfg.scheme, classes).map_err(|e| match e {
                Error::Numeric(reason) => Error::Diverged { epoch, reason },
                other => other,
            })?;
        per_epoch.row_mut(epoch).copy_from_slice(&values);
        utilities.push(utility);
        losses.push(mean_loss);

        train_epoch(&mut model, data, &all, None, &tc, epoch)?;
        seconds.push(start.elapsed().as_secs_f64());
    }

    let kept = cfg.skip_first_epochs..epochs;
    let count = kept.len() as f64;
    let mean_values = (0..data.len())
        .map(|j| stable_sum(kept.clone().map(|k| per_epoch.row(k)[j])) / count)
        .collect();

    Ok(ValuationRun {
        per_epoch_values: per_epoch,
        mean_values,
        per_epoch_utility: utilities,
        per_epoch_loss: losses,
        per_epoch_seconds: seconds,
        config: *cfg,
    })
}

/// Outcome of [`epoch_efficiency_audit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `|Σ_j φ_j − U(N)|` relative to `max(|U(N)|, Σ_j |φ_j|)`, per epoch.
    pub per_epoch_violation: Vec<f64>,
    pub max_violation: f64,
    pub tolerance: f64,
}

pub const EFFICIENCY_TOLERANCE: f64 = 1e-9;

/// Check `Σ_j φ_j = U(N)` for every recorded epoch.
pub fn epoch_efficiency_audit(
    run: &ValuationRun,
    per_epoch_utilities: &[f64],
) -> Result<AuditReport> {
    if per_epoch_utilities.len() != run.epochs() {
        return Err(Error::Input(format!(
            "{} utilities for {} epochs",
            per_epoch_utilities.len(),
            run.epochs()
        )));
    }
    let violations: Vec<f64> = per_epoch_utilities
        .iter()
        .enumerate()
        .map(|(k, &u)| efficiency_violation(run.per_epoch_values.row(k), u))
        .collect();
    let failing: Vec<usize> = violations
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_nan() || **v > EFFICIENCY_TOLERANCE)
        .map(|(k, _)| k)
        .collect();
    let max_violation = violations.iter().copied().fold(0.0, f64::max);
    if !failing.is_empty() {
        return Err(Error::Audit {
            epochs: failing,
            max_violation,
        });
    }
    Ok(AuditReport {
        per_epoch_violation: violations,
        max_violation,
        tolerance: EFFICIENCY_TOLERANCE,
    })
}

/// Relative efficiency gap of one value vector.
pub fn efficiency_violation(values: &[f64], utility: f64) -> f64 {
    let total = stable_sum(values.iter().copied());
    let scale = utility
        .abs()
        .max(stable_sum(values.iter().map(|v| v.abs())));
    let gap = (total - utility).abs();
    if gap == 0.0 {
        0.0
    } else if scale == 0.0 || !gap.is_finite() {
        f64::INFINITY
    } else {
        gap / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_built(values: Vec<f64>) -> ValuationRun {
        let n = values.len();
        ValuationRun {
            per_epoch_values: Matrix::from_vec(1, n, values.clone()).unwrap(),
            mean_values: values,
            per_epoch_utility: vec![0.0],
            per_epoch_loss: vec![0.0],
            per_epoch_seconds: vec![0.0],
            config: ValuationConfig::default(),
        }
    }

    #[test]
    fn audit_accepts_exact_and_rejects_perturbed() {
        let values = vec![0.25, 0.5, -0.125, 1.0];
        let u = 1.625;
        let report = epoch_efficiency_audit(&hand_built(values.clone()), &[u]).unwrap();
        assert_eq!(report.max_violation, 0.0);

        let perturbed: Vec<f64> = values.iter().map(|v| v + 1e-3).collect();
        match epoch_efficiency_audit(&hand_built(perturbed), &[u]) {
            Err(Error::Audit { epochs, .. }) => assert_eq!(epochs, vec![0]),
            other => panic!("expected audit failure, got {other:?}"),
        }
    }

    #[test]
    fn audit_checks_epoch_count() {
        assert!(epoch_efficiency_audit(&hand_built(vec![1.0]), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn skip_must_leave_epochs() {
        let ds = Dataset::new(Matrix::zeros(3, 1), vec![0, 1, 0], 2).unwrap();
        let cfg = ValuationConfig {
            skip_first_epochs: 20,
            ..ValuationConfig::default()
        };
        assert!(run_valuation(&ds, &cfg).is_err());
    }
}
