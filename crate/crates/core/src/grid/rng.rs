use std::f64::consts::PI;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Field, Shape};
use crate::error::{Error, Result};

/// Seeded counter-based generator. Gaussian variates come from Box–Muller on
/// the uniform stream; the second variate of each pair is cached.
#[derive(Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    /// Independent stream for sub-task `stream` (e.g. one image of a batch).
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner, spare: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher–Yates shuffle of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            idx.swap(i, j);
        }
        idx
    }
}

/// Field of i.i.d. N(0, σ²) entries.
pub fn sample_gaussian(rng: &mut Rng, shape: Shape, sigma: f64) -> Result<Field> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!("noise level must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(Field::zeros(shape));
    }
    Ok(Field::from_fn(shape, |_, _, _| sigma * rng.normal()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_gives_zeros() {
        let s = Shape::new(4, 4, 1).unwrap();
        let f = sample_gaussian(&mut Rng::new(1), s, 0.0).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_sigma_is_domain_error() {
        let s = Shape::new(4, 4, 1).unwrap();
        assert!(matches!(sample_gaussian(&mut Rng::new(1), s, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let s = Shape::new(16, 16, 3).unwrap();
        let a = sample_gaussian(&mut Rng::new(42), s, 0.3).unwrap();
        let b = sample_gaussian(&mut Rng::new(42), s, 0.3).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = sample_gaussian(&mut Rng::new(43), s, 0.3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_std_within_one_percent() {
        let s = Shape::new(1000, 1000, 1).unwrap();
        let f = sample_gaussian(&mut Rng::new(7), s, 0.05).unwrap();
        let mean = f.mean();
        let var = f.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / f.len() as f64;
        assert!(mean.abs() < 1e-3);
        assert!((var.sqrt() / 0.05 - 1.0).abs() < 0.01);
    }

    #[test]
    fn derived_streams_differ() {
        let mut a = Rng::derive(5, 0);
        let mut b = Rng::derive(5, 1);
        assert_ne!(a.uniform(), b.uniform());
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut p = Rng::new(3).permutation(100);
        p.sort_unstable();
        assert_eq!(p, (0..100).collect::<Vec<_>>());
    }
}
