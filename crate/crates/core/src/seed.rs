//! Stage-scoped sub-seed derivation.
//!
//! Every stochastic stage draws from its own stream, derived from the
//! master seed and a stage label. Adding a stage therefore never perturbs
//! the draws of existing stages, and two hosts with the same master seed
//! produce identical results.

use sha2::{Digest, Sha256};

/// Derive a sub-seed from `master` and a stage label.
///
/// Stable across platforms and releases: SHA-256 over the little-endian
/// master seed followed by the label bytes, truncated to 64 bits.
pub fn derive(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}
