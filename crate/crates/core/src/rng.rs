//! Seed derivation. Every random draw in the crate comes from a ChaCha stream
//! keyed by a master seed, so runs are reproducible and independent trials
//! never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a list of tags into a new seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(master), |acc, &p| {
        splitmix64(acc ^ splitmix64(p))
    })
}

/// Stream `index` of the generator keyed by `master`.
pub fn stream(master: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Tags for the independent streams a scenario draws from.
pub(crate) mod tag {
    pub const SYMBOLS: u64 = 1;
    pub const CHANNELS: u64 = 2;
    pub const INIT: u64 = 3;
    pub const BASELINE: u64 = 4;
}
