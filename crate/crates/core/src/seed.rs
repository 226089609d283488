//! Deterministic, splittable random streams.
//!
//! Parallel work never shares a generator: each task owns a `SeedStream`
//! with a distinct stream index, so results are reproducible regardless of
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// A (master seed, stream index) pair identifying one pseudo-random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl SeedStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self { master_seed, stream_index }
    }

    /// Instantiate the generator for this stream. Identical inputs yield
    /// bit-identical draw sequences.
    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// Derive a fresh 64-bit seed, e.g. for a partition.
    pub fn derive_seed(&self, salt: u64) -> u64 {
        let mut rng = self.rng();
        let base: u64 = rng.gen();
        // SplitMix64 finalizer over (base, salt).
        let mut z = base ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

/// Mix a cell identifier into a master seed so different study cells draw
/// from unrelated streams.
pub fn mix_seed(master_seed: u64, salt: u64) -> u64 {
    let mut z = master_seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
