//! Seeded randomness.
//!
//! Draws come from ChaCha8 seeded through `SeedableRng::seed_from_u64`, with
//! normal deviates from the ziggurat sampler in `rand_distr`. Both are fixed
//! algorithms, so a seed yields the same sequence on every platform.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::image::Image;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream for worker `index`, seeded with `seed ^ index`.
    pub fn fork(&self, index: u64) -> Rng {
        Rng::new(derive_seed(self.seed, index))
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.inner.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Grid of independent standard normal deviates, drawn in row-major order.
    pub fn normal_grid(&mut self, height: usize, width: usize, pitch_um: f64) -> Image {
        let pixels = (0..height * width).map(|_| self.normal()).collect();
        Image::grid(height, width, pixels, pitch_um).expect("positive dimensions")
    }
}

pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ index
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_seeds_agree_for_a_million_draws() {
        let mut a = Rng::new(0xA5A5);
        let mut b = Rng::new(0xA5A5);
        for _ in 0..1_000_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn forks_differ() {
        let base = Rng::new(7);
        let mut a = base.fork(1);
        let mut b = base.fork(2);
        assert_ne!(a.normal(), b.normal());
        assert_eq!(base.fork(3).seed(), 7 ^ 3);
    }

    #[test]
    fn normal_moments() {
        let mut rng = Rng::new(11);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }
}
