//! Reproducible random substreams.
//!
//! Every walker draws from its own generator, seeded by hashing the master
//! seed together with the walker index. Results therefore depend only on
//! `(master_seed, walker_id)` and never on how work is split across threads.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type WalkRng = Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of substream `stream` under `master`.
#[inline]
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    mix64(mix64(master ^ GOLDEN).wrapping_add(stream.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Seed reached by descending a path of stream indices.
pub fn derive_seed_path(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |seed, &s| derive_seed(seed, s))
}

pub fn substream(master: u64, stream: u64) -> WalkRng {
    WalkRng::seed_from_u64(derive_seed(master, stream))
}

/// Uniform draw in `[0, 1)` with 53 random bits.
#[inline]
pub fn uniform01<R: rand::RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `[0, bound)` by Lemire's multiply-shift with rejection.
#[inline]
pub fn below<R: rand::RngCore>(rng: &mut R, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let m = (rng.next_u64() as u128) * (bound as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}
