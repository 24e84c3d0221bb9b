//! Reproducible random streams.
//!
//! Every stream in the crate is a ChaCha20 generator (`rand_chacha::ChaCha20Rng`)
//! keyed by a 64-bit seed. The ChaCha20 block function is fully specified
//! (RFC 8439), so a given seed yields the same stream on every platform.
//!
//! Sub-seeds are derived from a root seed with [`derive_seed`]: the first eight
//! bytes (little endian) of `SHA-256(root_le || len(label)_le || label || index_le)`.
//! Distinct labels or indices give independent-looking streams, and adding a
//! new label never perturbs an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type SeededRng = ChaCha20Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        let a = derive_seed(7, "MER", 0);
        assert_eq!(a, derive_seed(7, "MER", 0));
        assert_ne!(a, derive_seed(7, "MER", 1));
        assert_ne!(a, derive_seed(7, "TD", 0));
        assert_ne!(a, derive_seed(8, "MER", 0));
        // label/index boundary must not alias
        assert_ne!(derive_seed(1, "a", 0x62), derive_seed(1, "ab", 0));
    }

    #[test]
    fn same_seed_same_stream() {
        let xs: Vec<u64> = seeded_rng(42).random_iter().take(16).collect();
        let ys: Vec<u64> = seeded_rng(42).random_iter().take(16).collect();
        assert_eq!(xs, ys);
    }
}
