//! Counter-keyed Gaussian noise.
//!
//! A [`NoiseSource`] is a key; every particle draws from its own ChaCha8
//! stream selected by particle index, so the sample a particle sees at a
//! given step depends only on (key, particle, step) and never on how work
//! is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    seed: u64,
    /// 0 for the root source, window index + 1 for derived ones.
    domain: u64,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self { seed, domain: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent source for one pipeline window.
    pub fn for_window(&self, window: usize) -> Self {
        Self {
            seed: self.seed,
            domain: window as u64 + 1,
        }
    }

    pub fn stream(&self, index: u64) -> NoiseStream {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.domain.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        NoiseStream { rng }
    }
}

/// Sequential i.i.d. standard normal draws.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// One draw per axis.
    pub fn pair(&mut self) -> [f64; 2] {
        let x = self.standard_normal();
        let y = self.standard_normal();
        [x, y]
    }
}
