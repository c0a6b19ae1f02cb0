//! Seed derivation and content hashing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// First eight bytes of the SHA-256 of `bytes`, little endian.
pub fn hash_u64(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&d[..8]);
    u64::from_le_bytes(buf)
}

/// Seed of the named substream of `root` ("data", "init", "noise", ...).
pub fn substream(root: u64, name: &str) -> u64 {
    hash_u64(format!("{root}/{name}").as_bytes())
}

pub fn rng_for(root: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream(root, name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn substreams_differ() {
        assert_ne!(substream(42, "data"), substream(42, "init"));
        assert_eq!(substream(42, "data"), substream(42, "data"));
    }
}
