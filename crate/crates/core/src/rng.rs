//! Seeded random streams.
//!
//! Every randomized routine takes an explicit `u64` seed. Independent
//! sub-streams (per trial, per model pair, ...) are derived with
//! [`derive_seed`] so results do not depend on evaluation order.

use rand::SeedableRng;

/// The generator used throughout the crate.
pub type LabRng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> LabRng {
    LabRng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sub-stream `stream` of `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    mix64(mix64(base) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}
