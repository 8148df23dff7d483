//! Seed derivation. Every stochastic component draws from its own stream,
//! keyed by the master seed, a stage name and a unit index, so the order in
//! which units are processed never changes the numbers they see.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `hash(master, stage, unit)`: FNV-1a over the stage name, mixed with the
/// master seed and unit index through SplitMix64.
pub fn derive_seed(master: u64, stage: &str, unit: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(splitmix64(master ^ h).wrapping_add(unit))
}

pub fn rng_for(master: u64, stage: &str, unit: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stage, unit))
}
