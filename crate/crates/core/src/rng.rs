//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by
//! `(seed, purpose, major, minor)`: the seed and purpose select the key, the
//! two indices select the 64-bit stream number. Streams are independent of
//! scheduling, so parallel construction reproduces sequential results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Separates the key space of unrelated consumers sharing one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Kernel = 1,
    Controlled = 2,
    Bootstrap = 3,
    Verify = 4,
    Contraction = 5,
    Holder = 6,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream `(major, minor)` of the key derived from `(seed, purpose)`.
///
/// Both indices must fit in 32 bits.
pub fn derive_stream(seed: u64, purpose: StreamPurpose, major: u64, minor: u64) -> SimRng {
    assert!(major <= u32::MAX as u64, "stream major index exceeds 32 bits");
    assert!(minor <= u32::MAX as u64, "stream minor index exceeds 32 bits");
    let mut state = seed ^ ((purpose as u64) << 56);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream((major << 32) | minor);
    rng
}
