//! Seed derivation and content hashing.
//!
//! A run has exactly one master seed. Every stochastic component (per-agent
//! initialization, batch shuffles, train/test splits, synthetic data) draws
//! from `derive_seed(master, role, index)`, so two runs that differ only in
//! collaboration mode start from the same per-agent parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// `master ⊕ H(role, index)` where `H` is the first 8 bytes (little endian)
/// of SHA-256 over `role || 0x00 || index_le`.
pub fn derive_seed(master: u64, role: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(role.as_bytes());
    h.update([0u8]);
    h.update(index.to_le_bytes());
    master ^ digest_u64(&h.finalize())
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// First 8 bytes of SHA-256, little endian.
pub fn hash64(bytes: &[u8]) -> u64 {
    digest_u64(&Sha256::digest(bytes))
}

fn digest_u64(d: &[u8]) -> u64 {
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    u64::from_le_bytes(b)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the exact bit patterns of a slice of reals.
pub fn checksum_f64(values: &[f64]) -> u64 {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
    digest_u64(&h.finalize())
}
