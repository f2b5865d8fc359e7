//! Deterministic random streams.
//!
//! Every random stream is a ChaCha8 generator keyed by a 64-bit seed and
//! addressed by a stream id. Seeds for trials and sensors are derived with
//! [`mix`], so a result depends only on `(master_seed, indices)` and never on
//! execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one seed.
///
/// `h = splitmix64(h ^ splitmix64(word))` for each word, starting from
/// `splitmix64(master)`. Distinct index tuples give independent-looking seeds
/// and the map is stable across releases.
pub fn mix(master: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(splitmix64(master), |h, &w| splitmix64(h ^ splitmix64(w)))
}

/// Seed of trial `trial` of scheme `scheme` at grid point `grid`.
pub fn trial_seed(master: u64, grid: u64, scheme: u64, trial: u64) -> u64 {
    mix(master, &[grid, scheme, trial])
}

/// Stream `stream` under key `seed`.
pub fn stream(seed: u64, stream: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
