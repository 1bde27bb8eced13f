//! Seed derivation for Monte Carlo paths.
//!
//! Path `i` under master seed `m` uses `path_seed(m, i)`:
//!
//! ```text
//! path_seed(m, i) = splitmix64(m ^ splitmix64(i + 0x9E3779B97F4A7C15))
//! ```
//!
//! where `splitmix64` is the finalizer of Steele, Lea and Flood's SplitMix64
//! generator. The derived seed depends only on `(m, i)`, so paths can be run
//! in any order and on any number of threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn path_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(GOLDEN_GAMMA)))
}

/// Human-readable description of the derivation, stored in reports.
pub const DERIVATION: &str = "splitmix64(master ^ splitmix64(index + 0x9E3779B97F4A7C15))";

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
