use chg_shapley::experiments::{make_synthetic_dataset, point_removal_curve, RemovalOrder};
use chg_shapley::model::{train_from_scratch, Dataset, TrainingSetup};
use chg_shapley::selection::{
    minmax_weights, random_baseline_training, run_selection_training,
    select_top_fraction_per_class, selected_count, SelectionConfig,
};
use chg_shapley::utility::{GradientSet, UtilityKind};
use chg_shapley::valuation::{
    efficiency_violation, epoch_efficiency_audit, run_valuation, value_gradient_set,
    ValuationConfig,
};
use chg_shapley::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quick_setup(epochs: usize) -> TrainingSetup {
    TrainingSetup {
        epochs,
        batch_size: 16,
        ..TrainingSetup::default()
    }
}

fn valuation(epochs: usize) -> ValuationConfig {
    ValuationConfig {
        setup: quick_setup(epochs),
        ..ValuationConfig::default()
    }
}

#[test]
fn identical_rows_share_a_value() {
    let base = make_synthetic_dataset(60, 4, 2, 2.0, 1).unwrap();
    let mut rows: Vec<f64> = base.features().as_slice().to_vec();
    rows.extend_from_slice(base.features().row(7));
    let mut labels = base.labels().to_vec();
    labels.push(labels[7]);
    let data = Dataset::new(Matrix::from_vec(61, 4, rows).unwrap(), labels, 2).unwrap();
    let run = run_valuation(&data, &valuation(5)).unwrap();
    assert!((run.mean_values[7] - run.mean_values[60]).abs() <= 1e-9);
}

#[test]
fn single_epoch_mean_is_that_epoch() {
    let data = make_synthetic_dataset(30, 3, 3, 2.0, 2).unwrap();
    let run = run_valuation(&data, &valuation(1)).unwrap();
    assert_eq!(run.epochs(), 1);
    assert_eq!(run.mean_values, run.per_epoch_values.row(0));
}

#[test]
fn mean_is_column_mean_and_audit_passes() {
    let data = make_synthetic_dataset(200, 5, 3, 2.0, 3).unwrap();
    let run = run_valuation(&data, &valuation(6)).unwrap();
    let means = run.per_epoch_values.column_means();
    for (a, b) in means.iter().zip(&run.mean_values) {
        assert!((a - b).abs() <= 1e-12);
    }
    let audit = epoch_efficiency_audit(&run, &run.per_epoch_utility).unwrap();
    assert!(audit.max_violation <= 1e-9);
}

#[test]
fn valuation_is_deterministic_across_thread_counts() {
    let data = make_synthetic_dataset(300, 6, 2, 2.0, 4).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_valuation(&data, &valuation(4)).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.per_epoch_values, b.per_epoch_values);
    assert_eq!(a.mean_values, b.mean_values);
}

#[test]
fn per_class_with_one_class_equals_whole() {
    let two = make_synthetic_dataset(50, 3, 2, 2.0, 5).unwrap();
    let data = Dataset::new(two.features().clone(), vec![0; 50], 1).unwrap();
    let whole = run_valuation(&data, &valuation(3)).unwrap();
    let per_class = run_valuation(
        &data,
        &ValuationConfig {
            per_class: true,
            ..valuation(3)
        },
    )
    .unwrap();
    assert_eq!(whole.per_epoch_values, per_class.per_epoch_values);
}

#[test]
fn epoch_values_scale_quadratically() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 40;
    let x: Vec<f64> = (0..n * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let losses: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    let gs = GradientSet::new(
        Matrix::from_vec(n, 6, x.clone()).unwrap(),
        losses.clone(),
        false,
    )
    .unwrap();
    let (base, u) = value_gradient_set(&gs, UtilityKind::Chg, None).unwrap();
    let t = 3.0;
    let scaled = GradientSet::new(
        Matrix::from_vec(n, 6, x.iter().map(|v| v * t).collect()).unwrap(),
        losses,
        false,
    )
    .unwrap();
    let (big, big_u) = value_gradient_set(&scaled, UtilityKind::Chg, None).unwrap();
    assert!((big_u - t * t * u).abs() <= 1e-12 * big_u.abs().max(1.0));
    for (b, s) in base.iter().zip(big) {
        assert!((s - t * t * b).abs() <= 1e-12 * s.abs().max(1.0));
    }
}

#[test]
fn ten_thousand_point_snapshot_is_efficient() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 10_000;
    let x: Vec<f64> = (0..n * 8)
        .map(|_| rng.random_range(-1.0..1.0) + 0.3)
        .collect();
    let losses: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
    let gs = GradientSet::new(Matrix::from_vec(n, 8, x).unwrap(), losses, false).unwrap();
    let (values, u) = value_gradient_set(&gs, UtilityKind::Chg, None).unwrap();
    assert!(efficiency_violation(&values, u) <= 1e-9);
}

#[test]
fn selection_counts_and_weights_at_every_event() {
    let data = make_synthetic_dataset(130, 4, 3, 2.0, 6).unwrap();
    let cfg = SelectionConfig {
        setup: quick_setup(7),
        fraction: 0.15,
        interval: 3,
        ..SelectionConfig::default()
    };
    let out = run_selection_training(&data, None, &cfg).unwrap();
    let epochs: Vec<usize> = out.history.events.iter().map(|e| e.epoch).collect();
    assert_eq!(epochs, vec![0, 3, 6]);
    assert_eq!(out.history.metrics.len(), 7);
    for e in &out.history.events {
        for (c, members) in e.per_class.iter().enumerate() {
            assert_eq!(
                members.len(),
                selected_count(0.15, data.class_index()[c].len())
            );
            assert!(members.iter().all(|&i| data.labels()[i] == c));
        }
        assert!(e.weights.iter().all(|w| (0.0..=1.0).contains(w)));
        assert!(e.weights.contains(&1.0));
        assert!(e.weights.contains(&0.0));
    }

    let again = run_selection_training(&data, None, &cfg).unwrap();
    assert_eq!(out.history.events, again.history.events);
    assert_eq!(out.model, again.model);
}

#[test]
fn interval_past_the_end_selects_once() {
    let data = make_synthetic_dataset(60, 3, 2, 2.0, 7).unwrap();
    let cfg = SelectionConfig {
        setup: quick_setup(4),
        interval: 4,
        ..SelectionConfig::default()
    };
    let out = run_selection_training(&data, None, &cfg).unwrap();
    assert_eq!(out.history.events.len(), 1);
    assert_eq!(out.history.events[0].epoch, 0);
}

fn full_training(data: &Dataset, setup: &TrainingSetup) -> Vec<f64> {
    let all: Vec<usize> = (0..data.len()).collect();
    train_from_scratch(data, &all, setup).unwrap().parameters()
}

#[test]
fn tied_values_reduce_selection_to_full_training() {
    // Every populated row is identical, so all values tie and the min-max
    // weights fall back to ones.
    let features = Matrix::from_vec(24, 2, [0.5, -1.0].repeat(24)).unwrap();
    let data = Dataset::new(features, vec![0; 24], 2).unwrap();
    let cfg = SelectionConfig {
        setup: quick_setup(6),
        fraction: 1.0,
        interval: 1,
        ..SelectionConfig::default()
    };
    let out = run_selection_training(&data, None, &cfg).unwrap();
    assert!(out
        .history
        .events
        .iter()
        .all(|e| e.weights.iter().all(|&w| w == 1.0)));
    assert_eq!(out.model.parameters(), full_training(&data, &cfg.setup));
}

#[test]
fn unit_weights_at_full_fraction_match_full_training() {
    let data = make_synthetic_dataset(90, 4, 3, 2.0, 8).unwrap();
    let cfg = SelectionConfig {
        setup: quick_setup(5),
        fraction: 1.0,
        interval: 1,
        uniform_weights: true,
        ..SelectionConfig::default()
    };
    let full = full_training(&data, &cfg.setup);
    let chg = run_selection_training(&data, None, &cfg).unwrap();
    assert_eq!(chg.model.parameters(), full);
    for adaptive in [false, true] {
        let r = random_baseline_training(&data, None, &cfg, adaptive).unwrap();
        assert_eq!(r.model.parameters(), full);
    }
}

#[test]
fn adaptive_random_without_reselection_is_random() {
    let data = make_synthetic_dataset(80, 3, 2, 2.0, 9).unwrap();
    let cfg = SelectionConfig {
        setup: quick_setup(5),
        fraction: 0.3,
        interval: usize::MAX,
        ..SelectionConfig::default()
    };
    let fixed = random_baseline_training(&data, None, &cfg, false).unwrap();
    let adaptive = random_baseline_training(&data, None, &cfg, true).unwrap();
    assert_eq!(fixed.model, adaptive.model);
    assert_eq!(fixed.history.events, adaptive.history.events);
    assert_eq!(fixed.history.events[0].subset().len(), 24);

    let repeat = random_baseline_training(&data, None, &cfg, false).unwrap();
    assert_eq!(fixed.history.events, repeat.history.events);
}

#[test]
fn removal_curves_share_the_unremoved_point() {
    let data = make_synthetic_dataset(120, 4, 2, 3.0, 10).unwrap();
    let test = make_synthetic_dataset(120, 4, 2, 3.0, 11).unwrap();
    let setup = quick_setup(4);
    let run = run_valuation(
        &data,
        &ValuationConfig {
            setup,
            ..Default::default()
        },
    )
    .unwrap();
    let curve =
        point_removal_curve(&run.mean_values, &data, &test, &setup, &[0.0, 0.3, 1.0], 1).unwrap();
    let first: Vec<Option<f64>> = RemovalOrder::ALL
        .iter()
        .map(|&o| curve.series(o)[0])
        .collect();
    assert!(first.iter().all(|a| *a == first[0] && a.is_some()));
    for &o in &RemovalOrder::ALL {
        let s = curve.series(o);
        assert!(s[1].is_some_and(|a| (0.0..=1.0).contains(&a)));
        assert_eq!(s[2], None);
    }
}

proptest! {
    #[test]
    fn positive_rescaling_keeps_selection_and_weights(
        values in prop::collection::vec(-5.0f64..5.0, 2..40),
        scale in 0.01f64..100.0,
        fraction in 0.05f64..1.0,
    ) {
        let n = values.len();
        let classes = vec![
            ((0..n / 2).collect::<Vec<_>>(), values[..n / 2].to_vec()),
            ((n / 2..n).collect::<Vec<_>>(), values[n / 2..].to_vec()),
        ];
        let scaled: Vec<_> = classes
            .iter()
            .map(|(i, v)| (i.clone(), v.iter().map(|x| x * scale).collect::<Vec<_>>()))
            .collect();
        let a = select_top_fraction_per_class(&classes, fraction).unwrap();
        let b = select_top_fraction_per_class(&scaled, fraction).unwrap();
        prop_assert_eq!(&a, &b);

        let picked: Vec<f64> = a.iter().map(|&i| values[i]).collect();
        let picked_scaled: Vec<f64> = picked.iter().map(|v| v * scale).collect();
        let w = minmax_weights(&picked);
        let ws = minmax_weights(&picked_scaled);
        for (x, y) in w.iter().zip(&ws) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        prop_assert!(w.iter().all(|x| (0.0..=1.0).contains(x)));
        prop_assert!(w.contains(&1.0));
    }
}
