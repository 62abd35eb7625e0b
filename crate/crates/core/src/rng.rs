//! Deterministic random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream keyed by
//! `(master seed, purpose, index)`. ChaCha is counter based, so streams with
//! different indices are independent without any coordination between
//! workers, and the same key always reproduces the same draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Environment = 1,
    Walk = 2,
    Spine = 3,
    Oracle = 4,
    Splitting = 5,
    Calibration = 6,
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the sub-generator for `(master, purpose)`.
pub fn purpose_seed(master: u64, purpose: Purpose) -> u64 {
    mix64(master ^ mix64(purpose as u64))
}

pub fn stream(master: u64, purpose: Purpose, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(purpose_seed(master, purpose));
    rng.set_stream(index);
    rng
}

/// Generator for a keyed object (one tree vertex, one sample chunk) that must
/// not depend on the order in which objects are realised.
pub fn keyed(key: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(mix64(key))
}
