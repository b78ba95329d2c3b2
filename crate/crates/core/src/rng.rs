//! Seeded random stream used by the defenses and the synthetic generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic stream: the same seed always yields the same draws.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Stream for item `index` of a run seeded with `seed`.
    pub fn derived(seed: u64, index: u64) -> Self {
        Self::new(derive_seed(seed, index))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform integer in `[a, b]`, both ends inclusive.
    pub fn randi(&mut self, a: i64, b: i64) -> i64 {
        debug_assert!(a <= b);
        self.inner.gen_range(a..=b)
    }

    /// Uniform real in `[0, 1)`.
    pub fn randr(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub(crate) fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}

/// SplitMix64 finalizer over `(seed, index)`. Stable across platforms and
/// independent of how work is scheduled.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
