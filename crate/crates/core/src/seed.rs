//! Deterministic seed derivation.
//!
//! Every randomized stage owns an independent RNG stream derived from the
//! master seed and a path of integers (repetition index, replica index,
//! classifier id, ...). Results are therefore independent of scheduling
//! order when repetitions run in parallel.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates consecutive inputs.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a path of stream indices.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &p in path {
        state = splitmix64(state ^ splitmix64(p));
    }
    state
}

/// RNG for a derived stream.
pub fn rng(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, path))
}
