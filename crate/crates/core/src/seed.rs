//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator whose seed is
//! derived from a parent seed and a label: the first eight bytes of
//! `SHA-256(parent_le || label)`. Streams with different labels are
//! independent, and a stream never depends on how many values another
//! stream consumed, so parallel and serial runs draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive(parent: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(parent.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng(parent: u64, label: &str) -> Rng {
    ChaCha8Rng::seed_from_u64(derive(parent, label))
}

/// Hex SHA-256 of a float slice's bit patterns; used to prove arrays are untouched.
pub fn fingerprint<'a>(arrays: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut hasher = Sha256::new();
    for array in arrays {
        for v in array {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
