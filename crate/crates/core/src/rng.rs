//! Seed derivation. Every random stream in the crate is a ChaCha8 stream
//! keyed by a base seed and selected by a small tuple of counters, so runs
//! are reproducible bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for `(seed, a, b)`, e.g. dropout masks keyed by
/// `(seed, layer, epoch)`.
pub fn stream(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed));
    rng.set_stream(mix(a.wrapping_mul(0x1000_0000_01B3) ^ mix(b)));
    rng
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
