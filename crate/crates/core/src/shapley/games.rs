use super::Game;
use crate::linalg::{dist_sq, dot, norm_sq, Matrix};

fn coalition_mean(x: &Matrix, coalition: &[usize]) -> Vec<f64> {
    let mut mean = vec![0.0; x.cols()];
    for &i in coalition {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    let k = coalition.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    mean
}

/// `U(S) = ||α||² − ||mean_{i∈S} x_i − α||²`.
#[derive(Debug, Clone, Copy)]
pub struct ChgGame<'a> {
    pub x: &'a Matrix,
    pub alpha: &'a [f64],
}

impl Game for ChgGame<'_> {
    fn players(&self) -> usize {
        self.x.rows()
    }

    fn utility(&self, coalition: &[usize]) -> f64 {
        let mean = coalition_mean(self.x, coalition);
        norm_sq(self.alpha) - dist_sq(&mean, self.alpha)
    }
}

/// `U₁(S) = −||mean_{i∈S} x_i||²`, the α-free part of [`ChgGame`].
#[derive(Debug, Clone, Copy)]
pub struct QuadraticTermGame<'a> {
    pub x: &'a Matrix,
}

impl Game for QuadraticTermGame<'_> {
    fn players(&self) -> usize {
        self.x.rows()
    }

    fn utility(&self, coalition: &[usize]) -> f64 {
        -norm_sq(&coalition_mean(self.x, coalition))
    }
}

/// `U₂(S) = 2⟨mean_{i∈S} x_i, α⟩`, the linear part of [`ChgGame`].
#[derive(Debug, Clone, Copy)]
pub struct LinearTermGame<'a> {
    pub x: &'a Matrix,
    pub alpha: &'a [f64],
}

impl Game for LinearTermGame<'_> {
    fn players(&self) -> usize {
        self.x.rows()
    }

    fn utility(&self, coalition: &[usize]) -> f64 {
        2.0 * dot(&coalition_mean(self.x, coalition), self.alpha)
    }
}

/// Game backed by a closure.
pub struct FnGame<F> {
    n: usize,
    f: F,
}

impl<F> FnGame<F>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    pub fn new(n: usize, f: F) -> Self {
        FnGame { n, f }
    }
}

impl<F> Game for FnGame<F>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    fn players(&self) -> usize {
        self.n
    }

    fn utility(&self, coalition: &[usize]) -> f64 {
        (self.f)(coalition)
    }
}
