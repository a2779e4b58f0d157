//! Linear-softmax classifiers with analytic per-example last-layer gradients.
//!
//! The head computes `z = W·h(x) + b` where `h` is either the identity or a
//! frozen random `tanh` feature map. Only the head is trained, so the
//! per-example gradient `(softmax(z) − onehot(y)) ⊗ [h(x), 1]` is the whole
//! trainable gradient. Flattened layout: `W` row-major, then `b`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, stable_sum, Matrix};

/// Labeled training data with per-class index lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    classes: usize,
    class_index: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::Input(format!(
                "{} labels for {} rows",
                labels.len(),
                features.rows()
            )));
        }
        if classes == 0 {
            return Err(Error::Input("need at least one class".into()));
        }
        if !features.is_finite() {
            return Err(Error::Input("non-finite feature value".into()));
        }
        let mut class_index = vec![Vec::new(); classes];
        for (i, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(Error::Input(format!(
                    "label {y} at row {i} is not below the class count {classes}"
                )));
            }
            class_index[y].push(i);
        }
        Ok(Dataset {
            features,
            labels,
            classes,
            class_index,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Ascending row indices of each class.
    pub fn class_index(&self) -> &[Vec<usize>] {
        &self.class_index
    }

    pub fn shape(&self) -> DatasetShape {
        DatasetShape {
            features: self.feature_dim(),
            classes: self.classes,
        }
    }

    /// Same data with replaced labels (class count unchanged).
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Dataset> {
        Dataset::new(self.features.clone(), labels, self.classes)
    }

    /// The given rows, in the given order, keeping the class count.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Input(format!("row {i} out of range")));
        }
        Dataset::new(
            self.features.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.classes,
        )
    }

    /// Read a CSV with a header row: feature columns, then an integer label
    /// column. Labels must be exactly `0..C` with every class present.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Dataset> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let width = reader.headers()?.len();
        if width < 2 {
            return Err(Error::Input(
                "csv needs at least one feature column and a label column".into(),
            ));
        }
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != width {
                return Err(Error::Input(format!("row {row} has {} fields", rec.len())));
            }
            for field in rec.iter().take(width - 1) {
                values.push(
                    field.trim().parse::<f64>().map_err(|e| {
                        Error::Input(format!("row {row}: bad feature {field:?}: {e}"))
                    })?,
                );
            }
            let label = &rec[width - 1];
            labels.push(
                label
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Input(format!("row {row}: bad label {label:?}: {e}")))?,
            );
        }
        if labels.is_empty() {
            return Err(Error::Input("csv has no data rows".into()));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        let ds = Dataset::new(
            Matrix::from_vec(labels.len(), width - 1, values)?,
            labels,
            classes,
        )?;
        if let Some(c) = ds.class_index.iter().position(Vec::is_empty) {
            return Err(Error::Input(format!(
                "labels are not contiguous: class {c} has no rows (classes 0..{classes})"
            )));
        }
        Ok(ds)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.feature_dim()).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        writer.write_record(&header)?;
        for (row, &y) in self.features.iter_rows().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(y.to_string());
            writer.write_record(&rec)?;
        }
        writer
            .flush()
            .map_err(|e| Error::Input(format!("csv write: {e}")))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetShape {
    pub features: usize,
    pub classes: usize,
}

/// Frozen input transform in front of the trainable head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureMap {
    Identity,
    /// `h(x) = tanh(P·x + c)` with `P` and `c` drawn once from the init seed.
    RandomTanh {
        projection: Matrix,
        offset: Vec<f64>,
    },
}

impl FeatureMap {
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            FeatureMap::Identity => input_dim,
            FeatureMap::RandomTanh { offset, .. } => offset.len(),
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::Identity => x.to_vec(),
            FeatureMap::RandomTanh { projection, offset } => projection
                .iter_rows()
                .zip(offset)
                .map(|(p, c)| (dot(p, x) + c).tanh())
                .collect(),
        }
    }
}

/// Fixed rate with optional cosine decay to zero over `total_epochs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub cosine_total_epochs: Option<usize>,
}

impl LrSchedule {
    pub fn constant(base: f64) -> Self {
        LrSchedule {
            base,
            cosine_total_epochs: None,
        }
    }

    pub fn at_epoch(&self, epoch: usize) -> f64 {
        match self.cosine_total_epochs {
            Some(total) if total > 0 => {
                let t = (epoch.min(total) as f64) / total as f64;
                0.5 * self.base * (1.0 + (std::f64::consts::PI * t).cos())
            }
            _ => self.base,
        }
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::constant(0.1)
    }
}

/// Parameters of the softmax head plus the frozen feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub feature_map: FeatureMap,
    pub steps: u64,
    pub schedule: LrSchedule,
}

/// Model construction options.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Width of the frozen random tanh layer; `None` for a plain linear model.
    pub hidden: Option<usize>,
    pub schedule: LrSchedule,
    pub seed: u64,
}

/// Half-width of the uniform weight initialization.
const INIT_SCALE: f64 = 0.01;

/// Small uniform weights, zero bias; deterministic per seed.
pub fn init_model(shape: DatasetShape, cfg: &ModelConfig) -> Result<ModelState> {
    if shape.features == 0 || shape.classes == 0 {
        return Err(Error::Input(format!("invalid model shape {shape:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let feature_map = match cfg.hidden {
        None => FeatureMap::Identity,
        Some(0) => return Err(Error::Input("hidden width must be positive".into())),
        Some(h) => {
            let scale = 1.0 / (shape.features as f64).sqrt();
            let projection: Vec<f64> = (0..h * shape.features)
                .map(|_| rng.random_range(-scale..scale))
                .collect();
            let offset = (0..h).map(|_| rng.random_range(-0.5..0.5)).collect();
            FeatureMap::RandomTanh {
                projection: Matrix::from_vec(h, shape.features, projection)?,
                offset,
            }
        }
    };
    let q = feature_map.output_dim(shape.features);
    let weights: Vec<f64> = (0..shape.classes * q)
        .map(|_| rng.random_range(-INIT_SCALE..INIT_SCALE))
        .collect();
    Ok(ModelState {
        weights: Matrix::from_vec(shape.classes, q, weights)?,
        bias: vec![0.0; shape.classes],
        feature_map,
        steps: 0,
        schedule: cfg.schedule,
    })
}

impl ModelState {
    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    /// Number of trainable parameters, `C·q + C`.
    pub fn parameter_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }

    /// Flattened parameters (`W` row-major, then `b`).
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = self.weights.as_slice().to_vec();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::Input(format!(
                "{} parameters given, model has {}",
                params.len(),
                self.parameter_count()
            )));
        }
        let split = self.weights.as_slice().len();
        self.weights
            .as_mut_slice()
            .copy_from_slice(&params[..split]);
        self.bias.copy_from_slice(&params[split..]);
        Ok(())
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        let q = self.feature_map.output_dim(data.feature_dim());
        if data.classes() != self.classes() || q != self.weights.cols() {
            return Err(Error::Input(format!(
                "model expects {} classes / head width {}, data has {} classes / head width {q}",
                self.classes(),
                self.weights.cols(),
                data.classes()
            )));
        }
        Ok(())
    }

    /// Head input and logits for one row.
    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h = self.feature_map.apply(x);
        let z = self
            .weights
            .iter_rows()
            .zip(&self.bias)
            .map(|(w, b)| dot(w, &h) + b)
            .collect();
        (h, z)
    }

    /// Input of the trainable head for a raw feature row.
    pub fn head_input(&self, x: &[f64]) -> Vec<f64> {
        self.feature_map.apply(x)
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let (_, z) = self.forward(x);
        argmax(&z)
    }

    /// Loss and softmax residual `p − onehot(y)` for one row.
    fn loss_and_residual(&self, data: &Dataset, i: usize) -> Result<(Vec<f64>, f64, Vec<f64>)> {
        let (h, z) = self.forward(data.features.row(i));
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite logits for example {i}")));
        }
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = z.iter().map(|v| (v - m).exp()).sum();
        let lse = m + sum_exp.ln();
        let y = data.labels[i];
        let loss = (lse - z[y]).max(0.0);
        let mut residual: Vec<f64> = z.iter().map(|v| (v - lse).exp()).collect();
        residual[y] -= 1.0;
        Ok((h, loss, residual))
    }
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = k;
        }
    }
    best
}

/// Per-example losses and flattened last-layer gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct PerExampleBatchResult {
    pub losses: Vec<f64>,
    pub last_layer_grads: Matrix,
}

/// Softmax cross-entropy and its last-layer gradient for each index, in
/// index order.
pub fn per_example_loss_and_grad(
    model: &ModelState,
    data: &Dataset,
    indices: &[usize],
) -> Result<PerExampleBatchResult> {
    model.check_data(data)?;
    if let Some(&i) = indices.iter().find(|&&i| i >= data.len()) {
        return Err(Error::Input(format!("example {i} out of range")));
    }
    let d = model.parameter_count();
    let q = model.weights.cols();
    let mut grads = Matrix::zeros(indices.len(), d);
    let mut losses = vec![0.0; indices.len()];

    if d > 0 {
        grads
            .as_mut_slice()
            .par_chunks_mut(d)
            .zip(losses.par_iter_mut())
            .zip(indices.par_iter())
            .try_for_each(|((g, l), &i)| -> Result<()> {
                let (h, loss, residual) = model.loss_and_residual(data, i)?;
                *l = loss;
                let (gw, gb) = g.split_at_mut(residual.len() * q);
                for (c, r) in residual.iter().enumerate() {
                    for (slot, hv) in gw[c * q..(c + 1) * q].iter_mut().zip(&h) {
                        *slot = r * hv;
                    }
                }
                gb.copy_from_slice(&residual);
                Ok(())
            })?;
    }
    Ok(PerExampleBatchResult {
        losses,
        last_layer_grads: grads,
    })
}

impl ModelState {
    /// In-place `θ ← θ − lr·(1/|batch|)·Σ w_i ∇f(i;θ)`; `None` weights mean all ones.
    pub fn apply_weighted_step(
        &mut self,
        data: &Dataset,
        indices: &[usize],
        weights: Option<&[f64]>,
        lr: f64,
    ) -> Result<()> {
        self.check_data(data)?;
        if let Some(w) = weights {
            if w.len() != indices.len() {
                return Err(Error::Input(format!(
                    "{} weights for {} examples",
                    w.len(),
                    indices.len()
                )));
            }
            if let Some(bad) = w.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Input(format!(
                    "weight {bad} is not a finite value >= 0"
                )));
            }
        }
        if indices.is_empty() {
            return Ok(());
        }
        let q = self.weights.cols();
        let c = self.classes();
        let mut gw = vec![0.0; c * q];
        let mut gb = vec![0.0; c];
        for (k, &i) in indices.iter().enumerate() {
            if i >= data.len() {
                return Err(Error::Input(format!("example {i} out of range")));
            }
            let w = weights.map_or(1.0, |w| w[k]);
            if w == 0.0 {
                continue;
            }
            let (h, _, residual) = self.loss_and_residual(data, i)?;
            for (cls, r) in residual.iter().enumerate() {
                let r = w * r;
                for (slot, hv) in gw[cls * q..(cls + 1) * q].iter_mut().zip(&h) {
                    *slot += r * hv;
                }
                gb[cls] += r;
            }
        }
        let scale = lr / indices.len() as f64;
        for (p, g) in self.weights.as_mut_slice().iter_mut().zip(&gw) {
            *p -= scale * g;
        }
        for (p, g) in self.bias.iter_mut().zip(&gb) {
            *p -= scale * g;
        }
        self.steps += 1;
        Ok(())
    }
}

/// One weighted SGD step, returning the updated model.
pub fn sgd_step_weighted(
    model: &ModelState,
    data: &Dataset,
    indices: &[usize],
    weights: &[f64],
    lr: f64,
) -> Result<ModelState> {
    let mut next = model.clone();
    next.apply_weighted_step(data, indices, Some(weights), lr)?;
    Ok(next)
}

/// Minibatch training options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle (one ChaCha stream per epoch).
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            seed: 0,
        }
    }
}

/// One epoch of minibatch SGD over `indices` with optional per-index weights.
///
/// The visiting order is a shuffle of positions `0..indices.len()` drawn from
/// `(cfg.seed, epoch)`, so equal index lists give equal trajectories.
pub fn train_epoch(
    model: &mut ModelState,
    data: &Dataset,
    indices: &[usize],
    weights: Option<&[f64]>,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<()> {
    if cfg.batch_size == 0 {
        return Err(Error::Input("batch size must be positive".into()));
    }
    if let Some(w) = weights {
        if w.len() != indices.len() {
            return Err(Error::Input(format!(
                "{} weights for {} examples",
                w.len(),
                indices.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..indices.len()).collect();
    order.shuffle(&mut rng);

    let lr = model.schedule.at_epoch(epoch);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut batch_w = Vec::with_capacity(cfg.batch_size);
    for chunk in order.chunks(cfg.batch_size) {
        batch.clear();
        batch.extend(chunk.iter().map(|&p| indices[p]));
        match weights {
            Some(w) => {
                batch_w.clear();
                batch_w.extend(chunk.iter().map(|&p| w[p]));
                model.apply_weighted_step(data, &batch, Some(&batch_w), lr)?;
            }
            None => model.apply_weighted_step(data, &batch, None, lr)?,
        }
    }
    Ok(())
}

/// Everything needed to build and train a model from scratch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSetup {
    pub epochs: usize,
    pub lr: f64,
    /// Cosine-decay the rate to zero over `epochs`.
    pub cosine: bool,
    pub batch_size: usize,
    pub hidden: Option<usize>,
    /// Seeds both the initialization and the per-epoch shuffles.
    pub seed: u64,
}

impl Default for TrainingSetup {
    fn default() -> Self {
        TrainingSetup {
            epochs: 20,
            lr: 0.1,
            cosine: false,
            batch_size: 32,
            hidden: None,
            seed: 0,
        }
    }
}

impl TrainingSetup {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            schedule: LrSchedule {
                base: self.lr,
                cosine_total_epochs: self.cosine.then_some(self.epochs),
            },
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Input("epochs must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Input(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Input("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Train on `indices` (unweighted) for `setup.epochs` epochs from a fresh init.
pub fn train_from_scratch(
    data: &Dataset,
    indices: &[usize],
    setup: &TrainingSetup,
) -> Result<ModelState> {
    setup.validate()?;
    let mut model = init_model(data.shape(), &setup.model_config())?;
    let tc = setup.train_config();
    for epoch in 0..setup.epochs {
        train_epoch(&mut model, data, indices, None, &tc, epoch)?;
        if !model.parameters().iter().all(|p| p.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                reason: "non-finite parameters".into(),
            });
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean cross-entropy and accuracy over the whole dataset.
pub fn evaluate(model: &ModelState, data: &Dataset) -> Result<Metrics> {
    model.check_data(data)?;
    if data.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty dataset".into()));
    }
    let per: Vec<(f64, bool)> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let (_, loss, residual) = model.loss_and_residual(data, i)?;
            // residual = p − onehot(y); prediction is argmax p
            let mut p = residual;
            p[data.labels[i]] += 1.0;
            Ok((loss, argmax(&p) == data.labels[i]))
        })
        .collect::<Result<_>>()?;
    let n = data.len() as f64;
    Ok(Metrics {
        loss: stable_sum(per.iter().map(|p| p.0)) / n,
        accuracy: per.iter().filter(|p| p.1).count() as f64 / n,
    })
}

/// Mean loss of the examples in `indices`.
pub fn batch_loss(model: &ModelState, data: &Dataset, indices: &[usize]) -> Result<f64> {
    let r = per_example_loss_and_grad(model, data, indices)?;
    Ok(stable_sum(r.losses.iter().copied()) / indices.len().max(1) as f64)
}
