//! Seed derivation for reproducible parallel replicates.
//!
//! Replicate `r` of an experiment with master seed `s` uses the stream
//! seeded by the first eight bytes (little endian) of
//! `SHA-256("privgraph/replicate" || s_le || r_le)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn derive_seed(master: u64, replicate: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(b"privgraph/replicate");
    h.update(master.to_le_bytes());
    h.update(replicate.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn replicate_stream(master: u64, replicate: u64) -> StreamRng {
    stream(derive_seed(master, replicate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, 0), derive_seed(7, 0));
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
        // computed independently with Python's hashlib
        assert_eq!(derive_seed(7, 3), 8103660423243480228);
        let a: u64 = replicate_stream(1, 2).random();
        let b: u64 = replicate_stream(1, 2).random();
        assert_eq!(a, b);
    }
}
