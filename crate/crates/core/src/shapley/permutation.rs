use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Game, Method, ShapleyValues};
use crate::error::{Error, Result};

/// Permutations per work unit; partial sums are combined in unit order so the
/// result does not depend on the thread count.
const CHUNK: usize = 64;

/// The RNG for permutation `index`: one ChaCha stream per permutation.
fn permutation_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Monte Carlo Shapley estimate from `samples` uniformly random orderings.
pub fn permutation_shapley<G: Game + ?Sized>(
    game: &G,
    samples: usize,
    seed: u64,
) -> Result<ShapleyValues> {
    let n = game.players();
    if n == 0 {
        return Err(Error::Input("game has no players".into()));
    }
    if samples == 0 {
        return Err(Error::Input("need at least one permutation sample".into()));
    }

    let chunks = samples.div_ceil(CHUNK);
    let partials: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; n];
            let mut order: Vec<usize> = Vec::with_capacity(n);
            let mut prefix: Vec<usize> = Vec::with_capacity(n);
            for k in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let mut rng = permutation_rng(seed, k as u64);
                order.clear();
                order.extend(0..n);
                order.shuffle(&mut rng);

                prefix.clear();
                let mut last = 0.0;
                for &p in &order {
                    let pos = prefix.partition_point(|&q| q < p);
                    prefix.insert(pos, p);
                    let u = game.utility(&prefix);
                    acc[p] += u - last;
                    last = u;
                }
            }
            acc
        })
        .collect();

    let mut values = vec![0.0; n];
    for part in partials {
        for (v, p) in values.iter_mut().zip(part) {
            *v += p;
        }
    }
    let m = samples as f64;
    values.iter_mut().for_each(|v| *v /= m);
    Ok(ShapleyValues {
        values,
        method: Method::PermutationMc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapley::FnGame;

    #[test]
    fn additive_game_is_exact_for_any_sample_count() {
        let w = [1.5, -0.25, 4.0, 0.0, 2.0];
        let g = FnGame::new(5, |s: &[usize]| s.iter().map(|&i| w[i]).sum());
        for samples in [1, 3, 100] {
            let v = permutation_shapley(&g, samples, 42).unwrap();
            for (a, b) in v.values.iter().zip(w) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_sample_is_that_permutations_marginals() {
        let u = |s: &[usize]| {
            let t: f64 = s.iter().map(|&i| (i + 1) as f64).sum();
            t * t
        };
        let g = FnGame::new(4, u);
        let v = permutation_shapley(&g, 1, 9).unwrap();

        let mut order: Vec<usize> = (0..4).collect();
        order.shuffle(&mut permutation_rng(9, 0));
        let mut expected = [0.0; 4];
        let mut members = Vec::new();
        let mut last = 0.0;
        for &p in &order {
            members.push(p);
            members.sort_unstable();
            let now = u(&members);
            expected[p] = now - last;
            last = now;
        }
        assert_eq!(v.values, expected);
    }

    #[test]
    fn seeded_runs_repeat() {
        let g = FnGame::new(6, |s: &[usize]| (s.len() as f64).sqrt() + s[0] as f64);
        let a = permutation_shapley(&g, 300, 1).unwrap();
        let b = permutation_shapley(&g, 300, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_samples_rejected() {
        let g = FnGame::new(2, |_: &[usize]| 1.0);
        assert!(permutation_shapley(&g, 0, 0).is_err());
    }
}
