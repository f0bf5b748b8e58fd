//! Deterministic seeded substreams. Every stochastic routine is fully
//! determined by (master seed, stream index); parallel replicas use disjoint
//! stream indices so results do not depend on worker scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e3779b97f4a7c15;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn seed_bytes(parts: &[u64]) -> [u8; 32] {
    let mut state = 0x6a09e667f3bcc908u64;
    for &p in parts {
        state ^= splitmix64(&mut { p });
        state = state.wrapping_mul(GOLDEN).rotate_left(27);
    }
    let mut out = [0u8; 32];
    for chunk in out.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    out
}

/// RNG for (seed, stream).
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(seed_bytes(&[seed, stream]))
}

/// RNG for a lane within a stream (used by the independent-pair simulation,
/// which needs two noise sources per stream).
pub fn substream_lane(seed: u64, stream: u64, lane: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(seed_bytes(&[seed, stream, !lane]))
}
