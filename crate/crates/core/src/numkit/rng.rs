//! Seeded random streams.
//!
//! Every stream is derived from a key rather than from shared mutable RNG
//! state, so results do not depend on evaluation order.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::Tensor;

/// Stable 64-bit hash of a seed plus byte-string parts.
pub fn stable_hash(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Generator keyed by `(seed, label, index)`.
pub fn keyed_rng(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stable_hash(seed, &[label.as_bytes(), &index.to_le_bytes()]))
}

/// Key for a counter-based dropout mask: (global seed, layer id, step).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DropoutKey {
    pub seed: u64,
    pub layer: u64,
    pub step: u64,
}

impl DropoutKey {
    pub fn new(seed: u64, layer: u64, step: u64) -> Self {
        Self { seed, layer, step }
    }

    pub fn with_layer(self, layer: u64) -> Self {
        Self { layer, ..self }
    }

    /// `n` uniforms in `[0, 1)`; the same key always yields the same values.
    pub fn uniforms(&self, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stable_hash(self.layer, &[&self.step.to_le_bytes()]));
        (0..n).map(|_| rng.random::<f64>()).collect()
    }
}

/// `uniform(−√(1/fan_in), +√(1/fan_in))`, keyed by parameter name.
pub fn uniform_init(shape: &[usize], fan_in: usize, seed: u64, name: &str) -> Tensor {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    let mut rng = keyed_rng(seed, name, 0);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}
