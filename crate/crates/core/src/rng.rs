//! Seed derivation. Every random stream in the crate comes from a
//! `ChaCha20Rng` whose seed is derived from a global seed plus a stage name
//! and/or an integer index, so stages and items can be regenerated
//! independently of each other.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th item of a stream rooted at `seed`.
pub fn derive(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Seed for a named pipeline stage (FNV-1a over the name, then mixed).
pub fn stage(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    derive(seed, h)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn rng_for(seed: u64, index: u64) -> Rng {
    rng(derive(seed, index))
}
