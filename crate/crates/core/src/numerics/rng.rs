//! Seedable random streams.
//!
//! A run has one root seed. Independent streams are derived from the root and a
//! tuple of integer keys (replication, subject, purpose, ...), so any partition
//! of work across threads sees exactly the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a stream from a root seed and a key path.
pub fn stream(root: u64, keys: &[u64]) -> Stream {
    let mut h = splitmix64(root);
    for &k in keys {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Derive a child seed (for handing a sub-task its own root).
pub fn child_seed(root: u64, keys: &[u64]) -> u64 {
    let mut h = splitmix64(root ^ 0xA076_1D64_78BD_642F);
    for &k in keys {
        h = splitmix64(h ^ k);
    }
    h
}
