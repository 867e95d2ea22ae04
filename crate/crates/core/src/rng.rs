//! Seedable, splittable random streams.
//!
//! Every stochastic operation takes an explicit seed; sample path `i` of an
//! experiment draws from stream `i` of the seed's ChaCha generator, so paths can
//! be produced in any order or in parallel with bit-identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PathRng = ChaCha8Rng;

/// Generator for sample path `path` of the experiment seeded with `seed`.
pub fn path_rng(seed: u64, path: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Derives an independent experiment seed, e.g. one per probing rate.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
