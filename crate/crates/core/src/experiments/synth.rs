use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::Dataset;

/// Class means with every pair of classes `separation` apart where the
/// geometry allows it.
///
/// * two classes: `±separation/2` along the first axis
/// * `p ≥ C`: scaled basis vectors (a regular simplex)
/// * otherwise a regular polygon in the first two axes (adjacent classes at
///   `separation`), or evenly spaced points when `p = 1`
fn class_means(p: usize, classes: usize, separation: f64) -> Vec<Vec<f64>> {
    let mut means = vec![vec![0.0; p]; classes];
    if classes == 2 {
        means[0][0] = -separation / 2.0;
        means[1][0] = separation / 2.0;
    } else if p >= classes {
        let s = separation / std::f64::consts::SQRT_2;
        for (c, m) in means.iter_mut().enumerate() {
            m[c] = s;
        }
    } else if p >= 2 {
        let r = separation / (2.0 * (std::f64::consts::PI / classes as f64).sin());
        for (c, m) in means.iter_mut().enumerate() {
            let t = 2.0 * std::f64::consts::PI * c as f64 / classes as f64;
            m[0] = r * t.cos();
            m[1] = r * t.sin();
        }
    } else {
        for (c, m) in means.iter_mut().enumerate() {
            m[0] = separation * c as f64;
        }
    }
    means
}

fn sample(
    n: usize,
    p: usize,
    classes: usize,
    separation: f64,
    seed: u64,
    stream: u64,
) -> Result<Dataset> {
    if classes < 2 || n < classes {
        return Err(Error::Input(format!(
            "synthetic data needs n >= C >= 2 (n={n}, C={classes})"
        )));
    }
    if p == 0 {
        return Err(Error::Input("synthetic data needs p >= 1".into()));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::Input(format!("invalid separation {separation}")));
    }
    let means = class_means(p, classes, separation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut features = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % classes;
        labels.push(y);
        for m in &means[y] {
            let z: f64 = rng.sample(StandardNormal);
            features.push(m + z);
        }
    }
    Dataset::new(Matrix::from_vec(n, p, features)?, labels, classes)
}

/// Unit-variance class-conditional Gaussians; label of row `i` is `i mod C`.
pub fn make_synthetic_dataset(
    n: usize,
    p: usize,
    classes: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    sample(n, p, classes, separation, seed, 0)
}

/// A train/test pair drawn from the same class-conditional Gaussians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub n: usize,
    pub n_test: usize,
    pub p: usize,
    pub classes: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        SyntheticTask {
            n: 1000,
            n_test: 1000,
            p: 20,
            classes: 2,
            separation: 4.0,
            seed: 0,
        }
    }
}

impl SyntheticTask {
    /// Training set (equal to [`make_synthetic_dataset`] with the same
    /// arguments) and an independent test set.
    pub fn generate(&self) -> Result<(Dataset, Dataset)> {
        let train = sample(self.n, self.p, self.classes, self.separation, self.seed, 0)?;
        let test = sample(
            self.n_test,
            self.p,
            self.classes,
            self.separation,
            self.seed,
            1,
        )?;
        Ok((train, test))
    }
}
