//! Seeded random streams.
//!
//! All randomness flows through ChaCha20, a counter-based generator: a 64-bit
//! seed picks the key and a stream id picks an independent sub-sequence. Block
//! seeds are derived from a root seed with a SplitMix64 finalizer so results
//! do not depend on the order in which blocks are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// What a derived seed is used for. The discriminant is mixed into the hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedRole {
    Rotation = 1,
    Qjl = 2,
    Factors = 3,
    Synthetic = 4,
    Queries = 5,
}

/// Independent sub-streams of one synthetic block seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Noise = 1,
    LeftVectors = 2,
    RightVectors = 3,
    Rotation = 4,
    Projection = 5,
    Queries = 6,
    Data = 7,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for `(block_index, role)` under `root`.
pub fn derive_seed(root: u64, block_index: u64, role: SeedRole) -> u64 {
    let h = splitmix64(root ^ splitmix64(block_index.wrapping_add(0x5851_F42D_4C95_7F2D)));
    splitmix64(h ^ (role as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn stream(seed: u64, stream: Stream) -> ChaCha20Rng {
    stream_with_id(seed, stream as u64)
}

pub fn stream_with_id(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn fill_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = StandardNormal.sample(rng);
    }
}
