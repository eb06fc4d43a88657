//! Every random choice in the crate is drawn from a ChaCha stream keyed by
//! an explicit seed and a purpose label.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub fn derive(seed: u64, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"vfhe-seed\0");
    h.update(label.as_bytes());
    h.update([0]);
    h.update(seed.to_le_bytes());
    h.finalize().into()
}

pub fn derive_u64(seed: u64, label: &str) -> u64 {
    let d = derive(seed, label);
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

pub fn rng(seed: u64, label: &str) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive(seed, label))
}
