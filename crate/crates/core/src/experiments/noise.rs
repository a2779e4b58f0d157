use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground truth of an injected label corruption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub rate: f64,
    pub seed: u64,
    pub flip_mask: Vec<bool>,
}

impl NoiseSpec {
    pub fn flipped(&self) -> usize {
        self.flip_mask.iter().filter(|&&m| m).count()
    }
}

/// Replace the labels of exactly `round(rate·n)` uniformly chosen points with
/// a uniformly chosen different class.
pub fn inject_label_noise(
    labels: &[usize],
    classes: usize,
    rate: f64,
    seed: u64,
) -> Result<(Vec<usize>, NoiseSpec)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Input(format!("noise rate {rate} outside [0, 1]")));
    }
    if let Some(y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Input(format!(
            "label {y} not below class count {classes}"
        )));
    }
    let n = labels.len();
    let count = (rate * n as f64).round() as usize;
    if count > 0 && classes < 2 {
        return Err(Error::Domain(
            "label noise needs at least two classes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = labels.to_vec();
    let mut mask = vec![false; n];
    let mut chosen = sample(&mut rng, n, count).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        let r = rng.random_range(0..classes - 1);
        out[i] = if r >= labels[i] { r + 1 } else { r };
        mask[i] = true;
    }
    Ok((
        out,
        NoiseSpec {
            rate,
            seed,
            flip_mask: mask,
        },
    ))
}
