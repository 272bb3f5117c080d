use sha2::{Digest, Sha256};

/// Derives an independent 64-bit seed for `(stream, index)` from a base seed.
pub fn derive_seed(base: u64, stream: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update((stream.len() as u64).to_le_bytes());
    h.update(stream.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}
