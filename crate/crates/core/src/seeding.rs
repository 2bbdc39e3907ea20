//! Stable seed derivation. Independent of platform, pointer width, and the
//! standard library's hasher.

use sha2::{Digest, Sha256};

/// Hashes a sequence of labelled parts into a 64-bit seed.
pub fn derive_seed(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parts_are_length_prefixed() {
        assert_ne!(derive_seed(&["ab", "c"]), derive_seed(&["a", "bc"]));
        assert_eq!(derive_seed(&["x", "1"]), derive_seed(&["x", "1"]));
    }
}
