use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Mixes a master seed with a stream tag (splitmix64 finaliser) so that
/// independent subsystems draw from unrelated streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random stream. ChaCha8 keeps the sequence stable across
/// platforms and crate versions.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent child stream; does not advance `self`.
    pub fn fork(&self, tag: u64) -> Self {
        let base: u64 = self.inner.get_seed()[..8]
            .iter()
            .fold(0u64, |acc, &b| (acc << 8) | u64::from(b));
        Self::new(derive_seed(base, tag))
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self, mean: f64, std_dev: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.inner);
        mean + std_dev * z
    }

    /// Uniform integer in the inclusive range `[lo, hi]`.
    pub fn int_range(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..=hi)
    }

    /// Index drawn with probability proportional to `weights`.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.uniform() * total;
        for (i, &w) in weights.iter().enumerate() {
            if u < w {
                return i;
            }
            u -= w;
        }
        // Rounding can leave u marginally past the last bucket.
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }

    /// Dirichlet draw via normalised gamma variates.
    pub fn dirichlet(&mut self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.is_empty() {
            return Err(Error::InvalidArgument(
                "dirichlet needs at least one concentration".into(),
            ));
        }
        if let Some(i) = alpha.iter().position(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dirichlet concentration {i} must be positive, got {}",
                alpha[i]
            )));
        }
        loop {
            let mut draws = Vec::with_capacity(alpha.len());
            for &a in alpha {
                let g = Gamma::new(a, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                draws.push(g.sample(&mut self.inner));
            }
            let total: f64 = draws.iter().sum();
            // Very small concentrations can underflow every component.
            if total > 0.0 && total.is_finite() {
                draws.iter_mut().for_each(|v| *v /= total);
                return Ok(draws);
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// `k` distinct indices from `0..n`, in draw order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, n, k).into_vec()
    }
}
