//! Stable content hashing.
//!
//! Every deterministic draw in the engine (simulated correctness, token
//! counts, price perturbation factors, catalog permutations) goes through
//! [`hash64`], so results are identical across platforms and releases.

use sha2::{Digest, Sha256};

/// 64-bit hash of a sequence of byte strings.
///
/// Each part is length-prefixed so `["ab", "c"]` and `["a", "bc"]` never
/// collide by construction.
pub fn hash64(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_be_bytes());
        hasher.update(part);
    }
    let out = hasher.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&out[..8]);
    u64::from_be_bytes(first)
}

/// Maps a hash onto `[0, 1)` using its top 53 bits.
pub fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Hex SHA-256 of `bytes`.
pub fn content_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_prefix_separates_parts() {
        assert_ne!(hash64(&[b"ab", b"c"]), hash64(&[b"a", b"bc"]));
        assert_eq!(hash64(&[b"x", b"y"]), hash64(&[b"x", b"y"]));
    }

    #[test]
    fn unit_interval_never_reaches_one() {
        assert!(unit_interval(u64::MAX) < 1.0);
        assert_eq!(unit_interval(0), 0.0);
    }

    #[test]
    fn pinned_hash_value() {
        // Pinned so accidental changes to the hashing scheme show up as test
        // failures rather than silently shifting every simulated run.
        assert_eq!(content_digest(b"").len(), 64);
        assert_eq!(
            content_digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
