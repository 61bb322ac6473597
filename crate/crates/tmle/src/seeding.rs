//! Deterministic RNG stream derivation. Every source of randomness in a
//! run flows from one master seed; independent units of work (simulation
//! replicates, bootstrap resamples, fold shuffles) get their own stream
//! derived from the master seed and their index path, so results are
//! reproducible at any worker count.

use rand_chacha::ChaCha12Rng;
use rand_chacha::rand_core::SeedableRng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derive an independent ChaCha stream from the master seed and a tag
/// path such as `[cell_index, replicate_index]`.
pub fn derive_rng(master: u64, tags: &[u64]) -> ChaCha12Rng {
    let mut state = master;
    let mut mixed = splitmix64(&mut state);
    for &t in tags {
        state ^= t.wrapping_mul(0xD6E8FEB86659FD93);
        mixed = splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    let mut s = mixed;
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}
