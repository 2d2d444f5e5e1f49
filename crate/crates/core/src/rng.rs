//! Seeding conventions.
//!
//! Every random draw in the crate comes from a [`ChaCha20Rng`], which is
//! counter-based and produces the same stream on every platform. A stream is
//! addressed by `(seed, purpose, index)`: the seed and purpose tag select the
//! key, the index selects the ChaCha stream id. Replicate `b` of a bootstrap or
//! repetition `r` of an experiment therefore draws from its own stream and the
//! result does not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Purpose tags separating the streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Graph = 1,
    Outcomes = 2,
    Truth = 3,
    Bootstrap = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for stream `index` of `purpose` under `seed`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha20Rng {
    let key = splitmix64(seed ^ splitmix64(purpose as u64));
    let mut rng = ChaCha20Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Child seed number `index` of `seed`, used to give each repetition of an
/// experiment its own master seed.
pub fn derive(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Plain generator for a user-supplied seed.
pub fn seeded(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
