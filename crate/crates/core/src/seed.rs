//! Deterministic seed derivation for independent jobs and random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `index` under `master`; distinct indices give unrelated seeds.
pub fn derive(master: u64, index: u64) -> u64 {
    mix(mix(master) ^ mix(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Named random streams used by one optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Weights = 1,
    Input = 2,
    Perturbation = 3,
}

pub fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream as u64))
}
