//! Deterministic random streams and Monte Carlo estimates.
//!
//! Every stochastic routine takes a root seed. Independent streams are
//! derived by hashing the seed together with a label and an index, so
//! results do not depend on call order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derive a stream from `(seed, label, index)`.
pub fn stream(seed: u64, label: &str, index: u64) -> Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Derive a child seed, for handing to routines that take a `u64`.
pub fn child_seed(seed: u64, label: &str, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, label, index).next_u64()
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    /// Mean and standard error of the mean.
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len();
        if n == 0 {
            return Estimate { value: f64::NAN, std_error: f64::INFINITY, samples: 0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::INFINITY
        };
        Estimate { value: mean, std_error: se, samples: n }
    }

    /// Bernoulli proportion with binomial standard error.
    pub fn proportion(hits: usize, n: usize) -> Estimate {
        let p = hits as f64 / n as f64;
        Estimate { value: p, std_error: (p * (1.0 - p) / n as f64).sqrt(), samples: n }
    }

    pub fn scaled(self, c: f64) -> Estimate {
        Estimate { value: self.value * c, std_error: self.std_error * c.abs(), samples: self.samples }
    }

    /// Whether `target` lies within `k` standard errors.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}
