//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha20 generator. A
//! `(seed, stream)` pair selects an independent keystream, so scenario `i` of
//! a dataset always sees the same numbers no matter which thread runs it or
//! in what order scenarios are generated.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type SimRng = ChaCha20Rng;

/// Generator for stream `stream` under the root `seed`.
pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a root seed and a label, for sub-experiments
/// that need their own family of streams.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
