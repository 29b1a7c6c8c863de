//! Counter-based random streams.
//!
//! Every randomized artifact derives its generator from a `(seed, index)`
//! pair instead of sharing one sequential generator, so output does not
//! depend on how work is split across threads.
//!
//! Construction (stable; changing it changes every dataset):
//!
//! 1. `key = SHA-256(domain || seed as u64 little-endian)` where `domain` is
//!    an ASCII label (`symseq/sample/v1` for dataset samples).
//! 2. The generator is ChaCha8 keyed with those 32 bytes, with its 64-bit
//!    stream id set to `index` and the word position at zero.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const SAMPLE_DOMAIN: &str = "symseq/sample/v1";

pub fn stream(domain: &str, seed: u64, index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(domain.as_bytes());
    h.update(seed.to_le_bytes());
    let key: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Generator for sample `index` of a dataset built with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    stream(SAMPLE_DOMAIN, seed, index)
}
