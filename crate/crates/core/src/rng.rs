//! Seed handling.
//!
//! Every random stream in the crate is a `ChaCha8Rng` (counter-based, fixed
//! algorithm identity across platforms). Child seeds are derived from a master
//! seed and an index path with a SplitMix64 finalizer, so a trial's stream does
//! not depend on the order in which trials are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and an index path.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &idx| {
        splitmix64(acc ^ splitmix64(idx.wrapping_add(GOLDEN)))
    })
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
