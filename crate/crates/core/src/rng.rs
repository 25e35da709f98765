//! Seed derivation.
//!
//! Every random draw in the toolkit comes from a [`ChaCha8Rng`] whose seed is
//! derived from one user seed plus a named stream (`"masking"`, `"init"`,
//! `"sampling"`, ...) and optionally an index. Streams are independent, so
//! changing how many draws one component makes never shifts another.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Mixing step of SplitMix64.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed for a named sub-stream of `seed`.
pub fn stream_seed(seed: u64, stream: &str) -> u64 {
    splitmix64(seed ^ fnv1a(stream.as_bytes()))
}

/// Seed for item `index` of a stream (per-example, per-epoch, per-cell).
pub fn indexed_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(seed: u64, stream: &str) -> ChaCha8Rng {
    rng_from_seed(stream_seed(seed, stream))
}
