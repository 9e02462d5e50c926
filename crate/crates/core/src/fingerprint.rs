//! Stable hashing used for seed derivation, fold keys and artifact fingerprints.
//!
//! Everything here is SHA-256 based so values are identical across platforms
//! and builds.

use sha2::{Digest, Sha256};

/// Incremental fingerprint builder. Each part is length-prefixed so
/// `("ab", "c")` and `("a", "bc")` hash differently.
#[derive(Clone, Default)]
pub struct Fingerprint {
    hasher: Sha256,
}

impl Fingerprint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(mut self, part: &[u8]) -> Self {
        self.hasher.update((part.len() as u64).to_le_bytes());
        self.hasher.update(part);
        self
    }

    pub fn str(self, part: &str) -> Self {
        self.bytes(part.as_bytes())
    }

    pub fn u64(self, v: u64) -> Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64(self, v: f64) -> Self {
        self.bytes(&v.to_bits().to_le_bytes())
    }

    pub fn hex(self) -> String {
        let digest = self.hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_u64(self) -> u64 {
        let digest = self.hasher.finalize();
        let mut buf = [0u8; 8];
        buf.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(buf)
    }
}

/// 64-bit stable key for a seed and a list of string parts.
pub fn stable_u64(seed: u64, parts: &[&str]) -> u64 {
    parts
        .iter()
        .fold(Fingerprint::new().u64(seed), |fp, p| fp.str(p))
        .to_u64()
}

pub fn sha256_hex(data: &[u8]) -> String {
    Fingerprint::new().bytes(data).hex()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_prefix_separates_parts() {
        assert_ne!(stable_u64(1, &["ab", "c"]), stable_u64(1, &["a", "bc"]));
        assert_eq!(stable_u64(1, &["ab", "c"]), stable_u64(1, &["ab", "c"]));
        assert_ne!(stable_u64(1, &["x"]), stable_u64(2, &["x"]));
    }

    #[test]
    fn hex_is_64_chars() {
        let h = sha256_hex(b"hello");
        assert_eq!(h.len(), 64);
        assert_ne!(h, sha256_hex(b"hellp"));
    }
}
