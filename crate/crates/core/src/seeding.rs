//! Stable seed derivation.
//!
//! Seeds are the 64-bit FNV-1a hash of a UTF-8 coordinate string, so a trial's
//! randomness depends only on what it is, never on scheduling.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fnv1a64(text: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(text.as_bytes());
    h.finish()
}

pub fn derive_seed(base_seed: u64, coordinates: &str) -> u64 {
    fnv1a64(&format!("{base_seed}|{coordinates}"))
}

pub fn rng_for(base_seed: u64, coordinates: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base_seed, coordinates))
}
