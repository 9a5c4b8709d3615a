//! Seed derivation for reproducible parallel simulation.
//!
//! Every random stream is addressed by `(seed, replication, stream)`, so the
//! draws a replication sees do not depend on scheduling or thread count.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

/// Stream index of the latent Gaussian field inside a replication.
pub const LATENT_STREAM: u64 = 0;
/// First stream index used by the scaling-process series.
pub const SCALING_STREAM_BASE: u64 = 1;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, replication, stream)`.
pub fn substream(seed: u64, replication: u64, stream: u64) -> StreamRng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    let mut mix = replication.wrapping_mul(0xD1B5_4A32_D192_ED03) ^ stream;
    rng.set_stream(splitmix64(&mut mix));
    rng
}

#[inline]
pub fn std_normal<R: rand_core::RngCore>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
