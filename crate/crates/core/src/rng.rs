//! Seeded random streams.
//!
//! Every stochastic step in the crate draws from a [`ChaCha8Rng`] seeded
//! through [`stream`]. ChaCha is counter based, so a `(seed, stream)` pair
//! names one reproducible sequence regardless of which thread consumes it.
//! Sub-streams are derived with the SplitMix64 finalizer, which keeps
//! nearby seeds (0, 1, 2, ...) statistically unrelated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type FdrRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed of sub-stream `stream` from a parent seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_mul(GOLDEN_GAMMA)))
}

pub fn from_seed(seed: u64) -> FdrRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for sub-stream `stream` of `seed`.
pub fn stream(seed: u64, stream: u64) -> FdrRng {
    from_seed(derive_seed(seed, stream))
}
