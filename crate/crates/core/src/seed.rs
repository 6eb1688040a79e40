//! Sub-seed derivation.
//!
//! Every random stream is keyed by `(master seed, stage name, item id)`:
//! the sub-seed is the first eight bytes (little-endian) of
//! `SHA-256("{master}/{stage}/{item}")`. Streams are ChaCha8.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(master: u64, stage: &str, item: u64) -> u64 {
    let digest = Sha256::digest(format!("{master}/{stage}/{item}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}

pub fn rng_for(master: u64, stage: &str, item: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stage, item))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_keyed() {
        assert_eq!(derive_seed(7, "poses", 0), derive_seed(7, "poses", 0));
        assert_ne!(derive_seed(7, "poses", 0), derive_seed(7, "poses", 1));
        assert_ne!(derive_seed(7, "poses", 0), derive_seed(8, "poses", 0));
        assert_ne!(derive_seed(7, "poses", 0), derive_seed(7, "scenarios", 0));
    }
}
