//! Seeded random streams.
//!
//! Every random object is drawn from `ChaCha8Rng::seed_from_u64(seed)` with a
//! dedicated stream id, so adding a layer or a second matrix never perturbs the
//! draws of another. Stream ids:
//!
//! | stream                 | use                                  |
//! |------------------------|--------------------------------------|
//! | `DATA_X`               | input rows                           |
//! | `DATA_Y`               | label rows                           |
//! | `LAYER_BASE + l`       | weight matrix `W_l` (1-based `l`)     |
//! | `LAMBDA_STAR`          | Monte-Carlo draws for λ_*             |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DATA_X: u64 = 1;
pub const DATA_Y: u64 = 2;
pub const LAMBDA_STAR: u64 = 3;
pub const LAYER_BASE: u64 = 1 << 16;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn layer_stream(seed: u64, layer: usize) -> ChaCha8Rng {
    stream(seed, LAYER_BASE + layer as u64)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes coordinates (sweep cell, trial index, ...) into a master seed.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(master), |h, &c| splitmix64(h ^ splitmix64(c)))
}
