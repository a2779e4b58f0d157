//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 input error (including bad flags), 2 numeric or
//! audit failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::experiments::{
    default_grid, detection_curve, inject_label_noise, point_removal_curve, DetectionReport,
    NoiseSpec, RemovalOrder, SyntheticTask,
};
use crate::linalg::Matrix;
use crate::model::{Dataset, TrainingSetup};
use crate::report;
use crate::selection::{run_policy, SelectionConfig, SubsetPolicy};
use crate::shapley::{chg_closed_form_shapley, exact_shapley, permutation_shapley, ChgGame};
use crate::utility::UtilityKind;
use crate::valuation::{epoch_efficiency_audit, run_valuation, ValuationConfig};

/// Environment fallback for `--out-dir`.
pub const OUT_DIR_ENV: &str = "CHG_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "chg-shapley",
    version,
    about = "Closed-form Shapley data valuation and selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Value every training point over one training run (values.csv).
    Value(RunArgs),
    /// Train on interval-reselected Shapley subsets (metrics.csv).
    Select(SelectArgs),
    /// Compare the closed form against exact enumeration and sampling.
    Oracle(OracleArgs),
    /// Noisy-label discovery experiment (detection.json).
    Bench(RunArgs),
    /// Point-removal curves (removal.csv).
    Removal(RemovalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scheme {
    Chg,
    Hardness,
    Gradient,
}

impl From<Scheme> for UtilityKind {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Chg => UtilityKind::Chg,
            Scheme::Hardness => UtilityKind::Hardness,
            Scheme::Gradient => UtilityKind::Gradient,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Output directory (falls back to $CHG_OUT_DIR, then ./chg-out).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Training CSV (features then integer label). Synthetic data if absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Held-out CSV for accuracies; defaults to the synthetic test split, or
    /// the training data when --data is given.
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Scheme::Chg)]
    scheme: Scheme,
    #[arg(long, default_value_t = 0.1)]
    fraction: f64,
    #[arg(long, default_value_t = 20)]
    interval: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Fraction of training labels to corrupt (default 0; 0.3 for bench).
    #[arg(long)]
    noise_rate: Option<f64>,
    /// Value each class separately.
    #[arg(long)]
    per_class: bool,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Width of a frozen random tanh layer in front of the softmax head.
    #[arg(long)]
    hidden: Option<usize>,
    /// Epochs left out of the value average.
    #[arg(long, default_value_t = 0)]
    skip_first_epochs: usize,
    /// Synthetic training size.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    #[arg(long, default_value_t = 20)]
    p: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 4.0)]
    separation: f64,
    /// Repeat over seeds seed, seed+1, … (bench and removal).
    #[arg(long, default_value_t = 1)]
    repeats: u64,
    /// Also write tidy long-format CSV for plotting.
    #[arg(long)]
    plot_data: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Baseline {
    Chg,
    Random,
    AdaptiveRandom,
}

#[derive(Debug, Clone, Args)]
struct SelectArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value_t = Baseline::Chg)]
    baseline: Baseline,
    /// Train the selected subset with unit weights.
    #[arg(long)]
    uniform_weights: bool,
}

#[derive(Debug, Clone, Args)]
struct RemovalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated removal fractions.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5")]
    grid: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    /// Players per game.
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Permutations for the Monte Carlo comparison (0 to skip).
    #[arg(long, default_value_t = 1000)]
    mc_samples: usize,
    /// Largest game the exact oracle accepts.
    #[arg(long, default_value_t = crate::shapley::DEFAULT_EXACT_LIMIT)]
    limit: usize,
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let threads = match &cli.command {
        Command::Value(a) | Command::Bench(a) => a.common.threads,
        Command::Select(a) => a.run.common.threads,
        Command::Removal(a) => a.run.common.threads,
        Command::Oracle(a) => a.common.threads,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Input("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Value(a) => cmd_value(&a),
        Command::Select(a) => cmd_select(&a),
        Command::Oracle(a) => cmd_oracle(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Removal(a) => cmd_removal(&a),
    })
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = common
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("chg-out"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn setup(a: &RunArgs, seed: u64) -> TrainingSetup {
    TrainingSetup {
        epochs: a.epochs,
        lr: a.lr,
        cosine: false,
        batch_size: a.batch_size,
        hidden: a.hidden,
        seed,
    }
}

/// Training data, optional evaluation data, and the injected noise.
struct Loaded {
    train: Dataset,
    test: Option<Dataset>,
    noise: Option<NoiseSpec>,
}

fn load_data(a: &RunArgs, seed: u64, default_noise: f64) -> Result<Loaded> {
    let (train, mut test) = match &a.data {
        Some(path) => (Dataset::load_csv(path)?, None),
        None => {
            let task = SyntheticTask {
                n: a.n,
                n_test: a.n_test,
                p: a.p,
                classes: a.classes,
                separation: a.separation,
                seed,
            };
            let (train, test) = task.generate()?;
            (train, Some(test))
        }
    };
    if let Some(path) = &a.test_data {
        test = Some(Dataset::load_csv(path)?);
    }
    let rate = a.noise_rate.unwrap_or(default_noise);
    if rate > 0.0 {
        let (labels, spec) = inject_label_noise(train.labels(), train.classes(), rate, seed)?;
        Ok(Loaded {
            train: train.with_labels(labels)?,
            test,
            noise: Some(spec),
        })
    } else {
        if rate < 0.0 {
            return Err(Error::Input(format!("noise rate {rate} outside [0, 1]")));
        }
        Ok(Loaded {
            train,
            test,
            noise: None,
        })
    }
}

fn valuation_config(a: &RunArgs, seed: u64) -> ValuationConfig {
    ValuationConfig {
        setup: setup(a, seed),
        scheme: a.scheme.into(),
        per_class: a.per_class,
        skip_first_epochs: a.skip_first_epochs,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    report::write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        Ok(())
    })
}

fn cmd_value(a: &RunArgs) -> Result<()> {
    let dir = out_dir(&a.common)?;
    let seed = a.common.seed;
    let start = Instant::now();
    let data = load_data(a, seed, 0.0)?;
    let cfg = valuation_config(a, seed);
    let run = run_valuation(&data.train, &cfg)?;
    let audit = epoch_efficiency_audit(&run, &run.per_epoch_utility)?;

    let mask = data.noise.as_ref().map(|n| n.flip_mask.as_slice());
    let rows = report::value_rows(&run.mean_values, data.train.labels(), mask)?;
    report::write_file(&dir.join("values.csv"), |w| {
        report::write_values_csv(w, &rows)
    })?;
    write_json(
        &dir.join("run_meta.json"),
        &json!({
            "command": "value",
            "config": cfg,
            "seed": seed,
            "data": a.data.as_ref().map(|p| p.display().to_string()),
            "n": data.train.len(),
            "noise_rate": data.noise.as_ref().map(|n| n.rate),
            "per_epoch_utility": run.per_epoch_utility,
            "per_epoch_loss": run.per_epoch_loss,
            "efficiency_max_violation": audit.max_violation,
            "timings": { "per_epoch_seconds": run.per_epoch_seconds,
                         "total_seconds": start.elapsed().as_secs_f64() },
        }),
    )?;
    println!(
        "valued {} points over {} epochs; efficiency max violation {:e}; wrote {}",
        data.train.len(),
        run.epochs(),
        audit.max_violation,
        dir.join("values.csv").display()
    );
    Ok(())
}

fn cmd_select(a: &SelectArgs) -> Result<()> {
    let r = &a.run;
    let dir = out_dir(&r.common)?;
    let seed = r.common.seed;
    let start = Instant::now();
    let data = load_data(r, seed, 0.0)?;
    let cfg = SelectionConfig {
        setup: setup(r, seed),
        fraction: r.fraction,
        interval: r.interval,
        scheme: r.scheme.into(),
        uniform_weights: a.uniform_weights,
    };
    let policy = match a.baseline {
        Baseline::Chg => SubsetPolicy::Chg,
        Baseline::Random => SubsetPolicy::Random,
        Baseline::AdaptiveRandom => SubsetPolicy::AdaptiveRandom,
    };
    let outcome = run_policy(&data.train, data.test.as_ref(), &cfg, policy)?;
    let h = &outcome.history;
    report::write_file(&dir.join("metrics.csv"), |w| {
        report::write_metrics_csv(w, &h.metrics)
    })?;
    report::write_file(&dir.join("selection_history.jsonl"), |w| {
        report::write_history_jsonl(w, &h.events)
    })?;
    write_json(
        &dir.join("run_meta.json"),
        &json!({
            "command": "select",
            "policy": policy,
            "config": cfg,
            "seed": seed,
            "selection_events": h.events.len(),
            "final_test_accuracy": outcome.final_accuracy(),
            "diverged_at": outcome.diverged_at,
            "timings": { "total_seconds": start.elapsed().as_secs_f64() },
        }),
    )?;
    if let Some(epoch) = outcome.diverged_at {
        return Err(Error::Diverged {
            epoch,
            reason: "non-finite loss (history written)".into(),
        });
    }
    println!(
        "{} selection events; final test accuracy {:.4}",
        h.events.len(),
        outcome.final_accuracy().unwrap_or(f64::NAN)
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct OracleReport {
    n: usize,
    d: usize,
    trials: usize,
    seed: u64,
    max_abs_err: f64,
    /// max over trials of `max_j |closed − exact| / max(1, max_j |exact|)`
    max_scaled_err: f64,
    max_efficiency_gap: f64,
    mc_samples: usize,
    /// max over trials of `max_j |mc − exact| / range(exact)`
    mc_max_range_err: Option<f64>,
    tolerance: f64,
    pass: bool,
}

const ORACLE_TOLERANCE: f64 = 1e-9;

fn cmd_oracle(a: &OracleArgs) -> Result<()> {
    if a.n == 0 || a.d == 0 || a.trials == 0 {
        return Err(Error::Input(
            "--n, --d and --trials must be positive".into(),
        ));
    }
    let dir = out_dir(&a.common)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
    let mut max_abs: f64 = 0.0;
    let mut max_scaled: f64 = 0.0;
    let mut max_eff: f64 = 0.0;
    let mut mc_err: Option<f64> = None;
    for t in 0..a.trials {
        let x: Vec<f64> = (0..a.n * a.d).map(|_| rng.sample(StandardNormal)).collect();
        let alpha: Vec<f64> = (0..a.d).map(|_| rng.sample(StandardNormal)).collect();
        let x = Matrix::from_vec(a.n, a.d, x)?;
        let game = ChgGame {
            x: &x,
            alpha: &alpha,
        };
        let closed = chg_closed_form_shapley(&x, &alpha)?;
        let exact = exact_shapley(&game, a.limit)?;
        let scale = exact.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (c, e) in closed.values.iter().zip(&exact.values) {
            max_abs = max_abs.max((c - e).abs());
            max_scaled = max_scaled.max((c - e).abs() / scale);
        }
        let all: Vec<usize> = (0..a.n).collect();
        use crate::shapley::Game;
        let u_n = game.utility(&all);
        max_eff = max_eff.max((closed.total() - u_n).abs() / u_n.abs().max(1.0));
        if a.mc_samples > 0 {
            let mc =
                permutation_shapley(&game, a.mc_samples, a.common.seed.wrapping_add(t as u64))?;
            let lo = exact.values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = exact
                .values
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let range = (hi - lo).max(f64::MIN_POSITIVE);
            let err = mc
                .values
                .iter()
                .zip(&exact.values)
                .map(|(m, e)| (m - e).abs() / range)
                .fold(0.0, f64::max);
            mc_err = Some(mc_err.map_or(err, |m: f64| m.max(err)));
        }
    }
    let report = OracleReport {
        n: a.n,
        d: a.d,
        trials: a.trials,
        seed: a.common.seed,
        max_abs_err: max_abs,
        max_scaled_err: max_scaled,
        max_efficiency_gap: max_eff,
        mc_samples: a.mc_samples,
        mc_max_range_err: mc_err,
        tolerance: ORACLE_TOLERANCE,
        pass: max_scaled <= ORACLE_TOLERANCE && max_eff <= ORACLE_TOLERANCE,
    };
    write_json(&dir.join("oracle.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if !report.pass {
        return Err(Error::Numeric(format!(
            "closed form deviates from enumeration by {max_scaled:e}"
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BenchSeed {
    seed: u64,
    auc: f64,
    mean_value_noisy: f64,
    mean_value_clean: f64,
    report: DetectionReport,
}

fn cmd_bench(a: &RunArgs) -> Result<()> {
    if a.repeats == 0 {
        return Err(Error::Input("--repeats must be positive".into()));
    }
    let dir = out_dir(&a.common)?;
    let mut runs = Vec::new();
    for seed in (0..a.repeats).map(|k| a.common.seed + k) {
        let data = load_data(a, seed, 0.3)?;
        let noise = data
            .noise
            .ok_or_else(|| Error::Domain("bench needs a positive --noise-rate".into()))?;
        let run = run_valuation(&data.train, &valuation_config(a, seed))?;
        epoch_efficiency_audit(&run, &run.per_epoch_utility)?;
        let report = detection_curve(&run.mean_values, &noise, &default_grid())?;
        let (noisy, clean) = split_means(&run.mean_values, &noise.flip_mask);
        runs.push(BenchSeed {
            seed,
            auc: report.auc,
            mean_value_noisy: noisy,
            mean_value_clean: clean,
            report,
        });
    }
    let mean_auc = runs.iter().map(|r| r.auc).sum::<f64>() / runs.len() as f64;
    let out = json!({
        "noise_rate": a.noise_rate.unwrap_or(0.3),
        "scheme": UtilityKind::from(a.scheme),
        "epochs": a.epochs,
        "mean_auc": mean_auc,
        "auc": runs[0].auc,
        "runs": runs,
    });
    write_json(&dir.join("detection.json"), &out)?;
    if a.plot_data {
        let rows: Vec<(String, f64, f64)> = runs
            .iter()
            .flat_map(|r| {
                let chg = r
                    .report
                    .fraction_inspected
                    .iter()
                    .zip(&r.report.detection_rate)
                    .map(move |(q, d)| (format!("seed{}", r.seed), *q, *d));
                let base = r
                    .report
                    .fraction_inspected
                    .iter()
                    .zip(&r.report.random_baseline)
                    .map(move |(q, d)| (format!("seed{}-random", r.seed), *q, *d));
                chg.chain(base)
            })
            .collect();
        report::write_file(&dir.join("detection_long.csv"), |w| {
            report::write_long_csv(w, &rows)
        })?;
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn split_means(values: &[f64], mask: &[bool]) -> (f64, f64) {
    let mean = |want: bool| {
        let (s, c) = values
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m == want)
            .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
        if c == 0 {
            f64::NAN
        } else {
            s / c as f64
        }
    };
    (mean(true), mean(false))
}

fn cmd_removal(a: &RemovalArgs) -> Result<()> {
    let r = &a.run;
    let dir = out_dir(&r.common)?;
    let seed = r.common.seed;
    let data = load_data(r, seed, 0.0)?;
    let run = run_valuation(&data.train, &valuation_config(r, seed))?;
    let test = data.test.as_ref().unwrap_or(&data.train);
    let curve = point_removal_curve(
        &run.mean_values,
        &data.train,
        test,
        &setup(r, seed),
        &a.grid,
        seed,
    )?;
    report::write_file(&dir.join("removal.csv"), |w| {
        report::write_removal_csv(w, &curve)
    })?;
    if r.plot_data {
        let rows: Vec<(String, f64, f64)> = RemovalOrder::ALL
            .iter()
            .flat_map(|&o| {
                curve
                    .removal_fractions
                    .iter()
                    .zip(curve.series(o))
                    .filter_map(move |(f, acc)| acc.map(|acc| (o.as_str().to_string(), *f, acc)))
            })
            .collect();
        report::write_file(&dir.join("removal_long.csv"), |w| {
            report::write_long_csv(w, &rows)
        })?;
    }
    println!("{}", serde_json::to_string_pretty(&curve)?);
    Ok(())
}
