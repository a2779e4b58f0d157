use chg_shapley::experiments::{
    descent_bound_check, make_synthetic_dataset, softmax_descent_check, softmax_lipschitz_bound,
};
use chg_shapley::model::{
    batch_loss, evaluate, init_model, per_example_loss_and_grad, sgd_step_weighted,
    train_from_scratch, Dataset, DatasetShape, LrSchedule, ModelConfig, ModelState, TrainingSetup,
};
use chg_shapley::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cross-entropy of example `i` written straight from the parameter vector
/// (`W` row-major, then `b`).
fn reference_loss(params: &[f64], h: &[f64], classes: usize, label: usize) -> f64 {
    let q = h.len();
    let logits: Vec<f64> = (0..classes)
        .map(|c| {
            let w = &params[c * q..(c + 1) * q];
            w.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() + params[classes * q + c]
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

fn random_instance(rng: &mut ChaCha8Rng, hidden: Option<usize>) -> (ModelState, Dataset) {
    let classes = rng.random_range(2..=4);
    let p = rng.random_range(1..=5);
    let n = 6;
    let features: Vec<f64> = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let data = Dataset::new(Matrix::from_vec(n, p, features).unwrap(), labels, classes).unwrap();
    let mut model = init_model(
        data.shape(),
        &ModelConfig {
            hidden,
            schedule: LrSchedule::constant(0.1),
            seed: rng.random(),
        },
    )
    .unwrap();
    let params: Vec<f64> = (0..model.parameter_count())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    model.set_parameters(&params).unwrap();
    (model, data)
}

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let step = 1e-5;
    for trial in 0..50 {
        let hidden = (trial % 5 == 4).then_some(3);
        let (model, data) = random_instance(&mut rng, hidden);
        let all: Vec<usize> = (0..data.len()).collect();
        let batch = per_example_loss_and_grad(&model, &data, &all).unwrap();
        let params = model.parameters();
        for &i in &all {
            let h = model.head_input(data.features().row(i));
            let y = data.labels()[i];
            let l = reference_loss(&params, &h, data.classes(), y);
            assert!((batch.losses[i] - l).abs() < 1e-12);
            for k in 0..params.len() {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus[k] += step;
                minus[k] -= step;
                let fd = (reference_loss(&plus, &h, data.classes(), y)
                    - reference_loss(&minus, &h, data.classes(), y))
                    / (2.0 * step);
                let g = batch.last_layer_grads.row(i)[k];
                assert!(
                    (g - fd).abs() <= 1e-6,
                    "trial {trial} example {i} param {k}: {g} vs {fd}"
                );
            }
        }
    }
}

#[test]
fn uniform_logits_cost_log_classes() {
    let data = make_synthetic_dataset(12, 3, 4, 1.0, 0).unwrap();
    let mut model = init_model(data.shape(), &ModelConfig::default()).unwrap();
    model
        .set_parameters(&vec![0.0; model.parameter_count()])
        .unwrap();
    let all: Vec<usize> = (0..12).collect();
    let r = per_example_loss_and_grad(&model, &data, &all).unwrap();
    for l in r.losses {
        assert!((l - 4f64.ln()).abs() < 1e-15);
    }
}

#[test]
fn duplicated_and_permuted_indices() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (model, data) = random_instance(&mut rng, None);
    let r = per_example_loss_and_grad(&model, &data, &[2, 4, 2]).unwrap();
    assert_eq!(r.losses[0], r.losses[2]);
    assert_eq!(r.last_layer_grads.row(0), r.last_layer_grads.row(2));
    let swapped = per_example_loss_and_grad(&model, &data, &[4, 2]).unwrap();
    assert_eq!(swapped.losses, vec![r.losses[1], r.losses[0]]);
    assert_eq!(swapped.last_layer_grads.row(1), r.last_layer_grads.row(0));
    assert!(r.losses.iter().all(|&l| l >= 0.0));
}

#[test]
fn non_finite_logits_report_the_example() {
    let features = Matrix::from_rows(&[[1.0], [1e200]]).unwrap();
    let data = Dataset::new(features, vec![0, 1], 2).unwrap();
    let mut model = init_model(data.shape(), &ModelConfig::default()).unwrap();
    model.set_parameters(&[1e200, -1e200, 0.0, 0.0]).unwrap();
    let err = per_example_loss_and_grad(&model, &data, &[0, 1]).unwrap_err();
    assert!(err.is_numeric());
    assert!(err.to_string().contains('1'), "{err}");
}

#[test]
fn seed_zero_init_fixture() {
    let cfg = ModelConfig {
        hidden: None,
        schedule: LrSchedule::constant(0.1),
        seed: 0,
    };
    let shape = DatasetShape {
        features: 4,
        classes: 3,
    };
    let a = init_model(shape, &cfg).unwrap();
    let b = init_model(shape, &cfg).unwrap();
    assert_eq!(a, b);
    let p = a.parameters();
    assert_eq!(p.len(), 15);
    assert!(p[12..].iter().all(|&b| b == 0.0));
    assert!(p.iter().all(|v| v.abs() <= 0.01));
    let sum: f64 = p.iter().sum();
    let sum_sq: f64 = p.iter().map(|v| v * v).sum();
    assert!((sum - 3.473_405_930_342_620_6e-2).abs() < 1e-15);
    assert!((sum_sq - 4.607_700_813_402_036_6e-4).abs() < 1e-16);

    let two = init_model(
        DatasetShape {
            features: 2,
            classes: 2,
        },
        &cfg,
    )
    .unwrap();
    assert_eq!(two.parameter_count(), 6);
}

#[test]
fn weighted_sgd_steps() {
    let data = make_synthetic_dataset(40, 3, 2, 3.0, 2).unwrap();
    let model = init_model(data.shape(), &ModelConfig::default()).unwrap();
    let idx: Vec<usize> = (0..40).collect();

    let frozen = sgd_step_weighted(&model, &data, &idx, &[0.0; 40], 0.5).unwrap();
    assert_eq!(frozen.parameters(), model.parameters());

    let ones = sgd_step_weighted(&model, &data, &idx, &[1.0; 40], 0.5).unwrap();
    let mut plain = model.clone();
    plain.apply_weighted_step(&data, &idx, None, 0.5).unwrap();
    assert_eq!(ones.parameters(), plain.parameters());

    let before = batch_loss(&model, &data, &idx).unwrap();
    let after = batch_loss(&ones, &data, &idx).unwrap();
    assert!(after < before);

    assert!(sgd_step_weighted(&model, &data, &idx, &[1.0; 3], 0.5).is_err());
    assert!(sgd_step_weighted(&model, &data, &idx, &[-1.0; 40], 0.5).is_err());
}

#[test]
fn quadratic_descent_bound_is_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let d = rng.random_range(1..10);
        let lip = rng.random_range(0.01..100.0);
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let c = descent_bound_check(lip, &theta, &x).unwrap();
        assert!(c.holds, "{c:?}");
    }
    let zero = descent_bound_check(2.0, &[1.0, -2.0], &[0.0, 0.0]).unwrap();
    assert_eq!(zero.lhs, 5.0);
    assert_eq!(zero.rhs, 5.0);
    assert!(descent_bound_check(0.0, &[1.0], &[1.0]).is_err());
}

#[test]
fn softmax_descent_inequality_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let data = make_synthetic_dataset(60, 4, 3, 2.0, 4).unwrap();
    let mut model = init_model(data.shape(), &ModelConfig::default()).unwrap();
    let lip = softmax_lipschitz_bound(&model, &data);
    for _ in 0..30 {
        let params: Vec<f64> = (0..model.parameter_count())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        model.set_parameters(&params).unwrap();
        let x: Vec<f64> = (0..params.len())
            .map(|_| rng.random_range(-3.0..3.0))
            .collect();
        let c = softmax_descent_check(&model, &data, &x, lip).unwrap();
        assert!(c.holds, "{c:?}");
    }
}

#[test]
fn training_reaches_expected_accuracy() {
    let setup = TrainingSetup::default();

    let noise = make_synthetic_dataset(1000, 20, 2, 0.0, 3).unwrap();
    let noise_test = make_synthetic_dataset(1000, 20, 2, 0.0, 4).unwrap();
    let all: Vec<usize> = (0..noise.len()).collect();
    let m = train_from_scratch(&noise, &all, &setup).unwrap();
    let acc = evaluate(&m, &noise_test).unwrap().accuracy;
    assert!((acc - 0.5).abs() <= 0.05, "accuracy {acc}");

    let easy = make_synthetic_dataset(1000, 20, 2, 8.0, 3).unwrap();
    let easy_test = make_synthetic_dataset(1000, 20, 2, 8.0, 4).unwrap();
    let m = train_from_scratch(&easy, &all, &setup).unwrap();
    assert!(evaluate(&m, &easy_test).unwrap().accuracy >= 0.99);
}

#[test]
fn csv_round_trip_and_validation() {
    let data = make_synthetic_dataset(9, 2, 3, 1.0, 0).unwrap();
    let mut buf = Vec::new();
    data.write_csv(&mut buf).unwrap();
    assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), data);

    let gap = "a,b,label\n0.1,0.2,0\n0.3,0.4,2\n";
    assert!(Dataset::read_csv(gap.as_bytes()).is_err());
    let bad = "a,label\nx,0\n";
    assert!(Dataset::read_csv(bad.as_bytes()).is_err());
}
