//! Seed-derived random streams.
//!
//! Every source of randomness is a ChaCha8 generator keyed by
//! `(master seed, stream, index)`, so parallel work units draw from
//! independent sequences while a run stays reproducible from its master
//! seed alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ParamInit = 1,
    Shuffle = 2,
    IcmOrder = 3,
    Sampling = 4,
    Split = 5,
    Csl = 6,
    Layer = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a stream tag and an index into a 64-bit seed.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream as u64)) ^ index)
}

pub fn stream(master: u64, stream: Stream, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(master, stream, index))
}
