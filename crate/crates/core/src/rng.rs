//! Seed derivation.
//!
//! One global seed fans out to per-component seeds with a splitmix64 mix of
//! `(seed, stream tag, index)`. Every random stream in the crate is a
//! `ChaCha8Rng` seeded this way, so results do not depend on thread count or
//! job scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// One round of the splitmix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed: `splitmix64(splitmix64(seed ^ fnv(tag)) + index)`.
pub fn derive(seed: u64, tag: &str, index: u64) -> u64 {
    // FNV-1a over the tag keeps streams with different names apart.
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01B3);
    }
    splitmix64(splitmix64(seed ^ h).wrapping_add(index))
}

pub fn rng_for(seed: u64, tag: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive(seed, tag, index))
}
