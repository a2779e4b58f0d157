use rayon::prelude::*;

use super::{Game, Method, ShapleyValues};
use crate::error::{Error, Result};
use crate::linalg::KahanSum;

/// Largest game [`exact_shapley`] accepts unless told otherwise.
pub const DEFAULT_EXACT_LIMIT: usize = 20;

/// Shapley values by full enumeration.
///
/// Every coalition's utility is evaluated once (`2^n` calls), then each
/// player sums its weighted marginals `(1/n)·C(n−1,|S|)⁻¹·(U(S∪{i}) − U(S))`
/// over all `S ⊆ N∖{i}`.
pub fn exact_shapley<G: Game + ?Sized>(game: &G, limit: usize) -> Result<ShapleyValues> {
    let n = game.players();
    if n == 0 {
        return Err(Error::Input("game has no players".into()));
    }
    if n > limit {
        return Err(Error::TooLarge { players: n, limit });
    }
    if n >= usize::BITS as usize - 1 {
        return Err(Error::TooLarge {
            players: n,
            limit: usize::BITS as usize - 2,
        });
    }

    let table: Vec<f64> = (0..1usize << n)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |members, mask| {
                if mask == 0 {
                    return 0.0;
                }
                members.clear();
                members.extend((0..n).filter(|&i| mask & (1 << i) != 0));
                game.utility(members)
            },
        )
        .collect();

    let weights = coalition_weights(n);
    let values = (0..n)
        .into_par_iter()
        .map(|i| {
            let bit = 1usize << i;
            let mut acc = KahanSum::default();
            for mask in (0..1usize << n).filter(|m| m & bit == 0) {
                let marginal = table[mask | bit] - table[mask];
                acc.add(weights[mask.count_ones() as usize] * marginal);
            }
            acc.value()
        })
        .collect::<Vec<_>>();

    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite Shapley value for player {i}"
        )));
    }
    Ok(ShapleyValues {
        values,
        method: Method::Exact,
    })
}

/// `w[s] = 1 / (n · C(n−1, s))` for `s = 0..n−1`.
fn coalition_weights(n: usize) -> Vec<f64> {
    let mut binom = 1.0f64;
    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        out.push(1.0 / (n as f64 * binom));
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapley::FnGame;

    #[test]
    fn constant_game_splits_evenly() {
        let g = FnGame::new(3, |_: &[usize]| 6.0);
        let v = exact_shapley(&g, DEFAULT_EXACT_LIMIT).unwrap();
        for x in v.values {
            assert!((x - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn additive_game_returns_each_weight() {
        let w = [0.5, -2.0, 3.25, 7.0];
        let g = FnGame::new(4, |s: &[usize]| s.iter().map(|&i| w[i]).sum());
        let v = exact_shapley(&g, DEFAULT_EXACT_LIMIT).unwrap();
        for (a, b) in v.values.iter().zip(w) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn squared_cardinality_game() {
        let g = FnGame::new(3, |s: &[usize]| (s.len() * s.len()) as f64);
        let v = exact_shapley(&g, DEFAULT_EXACT_LIMIT).unwrap();
        for x in v.values {
            assert!((x - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dummy_player_is_exactly_zero() {
        // player 2 never changes the utility
        let g = FnGame::new(4, |s: &[usize]| {
            let a = s.contains(&0) as u8 as f64;
            let b = s.contains(&1) as u8 as f64;
            let c = s.contains(&3) as u8 as f64;
            a * b * 3.0 + c - 0.25 * a
        });
        let v = exact_shapley(&g, DEFAULT_EXACT_LIMIT).unwrap();
        assert_eq!(v.values[2], 0.0);
    }

    #[test]
    fn refuses_oversized_games() {
        let g = FnGame::new(21, |_: &[usize]| 1.0);
        assert!(matches!(
            exact_shapley(&g, DEFAULT_EXACT_LIMIT),
            Err(Error::TooLarge {
                players: 21,
                limit: 20
            })
        ));
        let g = FnGame::new(5, |_: &[usize]| 1.0);
        assert!(exact_shapley(&g, 4).is_err());
    }

    #[test]
    fn weights_sum_to_one_per_player() {
        // Σ_s C(n−1,s)·w[s] = 1
        for n in 1..15 {
            let w = coalition_weights(n);
            let mut binom = 1.0;
            let mut total = 0.0;
            for (s, ws) in w.iter().enumerate() {
                total += binom * ws;
                binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
            }
            assert!((total - 1.0).abs() < 1e-12, "n={n}");
        }
    }
}
