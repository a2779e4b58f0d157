use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::KahanSum;

/// `h1 = Σ_{k=1..n} 1/k` and `h2 = Σ_{k=1..n} 1/k²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSums {
    pub n: usize,
    pub h1: f64,
    pub h2: f64,
}

impl HarmonicSums {
    /// Accumulates both sums in increasing `k`.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("harmonic sums need n >= 1".into()));
        }
        let mut h1 = KahanSum::default();
        let mut h2 = KahanSum::default();
        for k in 1..=n {
            let k = k as f64;
            h1.add(1.0 / k);
            h2.add(1.0 / (k * k));
        }
        Ok(HarmonicSums {
            n,
            h1: h1.value(),
            h2: h2.value(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        let h = HarmonicSums::new(1).unwrap();
        assert_eq!((h.h1, h.h2), (1.0, 1.0));

        let h = HarmonicSums::new(3).unwrap();
        assert!((h.h1 - 11.0 / 6.0).abs() < 1e-15);
        assert!((h.h2 - 49.0 / 36.0).abs() < 1e-15);

        let h = HarmonicSums::new(4).unwrap();
        assert!((h.h1 - 25.0 / 12.0).abs() < 1e-15);
        assert!((h.h2 - 205.0 / 144.0).abs() < 1e-15);
    }

    #[test]
    fn zero_is_a_domain_error() {
        assert!(matches!(HarmonicSums::new(0), Err(Error::Domain(_))));
    }

    #[test]
    fn monotone_and_bounded() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        let mut prev = HarmonicSums::new(1).unwrap();
        for n in 2..2000 {
            let h = HarmonicSums::new(n).unwrap();
            assert!(h.h1 > prev.h1 && h.h2 > prev.h2);
            assert!(h.h2 < h.h1);
            assert!(h.h2 < pi2_6);
            assert!((h.h1 - prev.h1 - 1.0 / n as f64).abs() < 1e-12);
            prev = h;
        }
    }
}
