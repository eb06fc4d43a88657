use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

use super::ring::Ring;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HashMode {
    /// Entries drawn uniformly from the plaintext space.
    #[default]
    Uniform,
    /// Entries are powers of two so the checksum reduces to shift-adds.
    Pow2,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashOptions {
    pub mode: HashMode,
    /// Resample zero entries. A zero entry leaves its row unchecked.
    pub nonzero: bool,
}

impl HashOptions {
    pub fn uniform() -> Self {
        HashOptions::default()
    }

    pub fn pow2() -> Self {
        HashOptions {
            mode: HashMode::Pow2,
            nonzero: false,
        }
    }
}

/// The client's blind hash vector. Never leaves the client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashVector<T> {
    pub entries: Vec<T>,
    pub mode: HashMode,
    /// Exponents of the entries in pow2 mode; empty otherwise.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exponents: Vec<u32>,
    #[serde(default = "secret_default")]
    pub secret: bool,
}

fn secret_default() -> bool {
    true
}

impl<T: Copy> HashVector<T> {
    /// Wraps caller-chosen uniform-mode entries.
    pub fn from_entries(entries: Vec<T>) -> Self {
        HashVector {
            entries,
            mode: HashMode::Uniform,
            exponents: Vec::new(),
            secret: true,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl HashVector<u64> {
    /// Entries as consecutive little-endian `u64`s.
    pub fn le_bytes(&self) -> Vec<u8> {
        self.entries.iter().flat_map(|e| e.to_le_bytes()).collect()
    }
}

impl HashVector<f64> {
    pub fn le_bytes(&self) -> Vec<u8> {
        self.entries.iter().flat_map(|e| e.to_le_bytes()).collect()
    }
}

pub fn gen_hash_vector<R: Ring>(
    ring: &R,
    m: usize,
    opts: HashOptions,
    seed: u64,
) -> Result<HashVector<R::Elem>> {
    if m == 0 {
        return Err(Error::dim("hash vector length must be at least 1"));
    }
    let mut rng = seed::rng(seed, "hash-vector");
    match opts.mode {
        HashMode::Uniform => {
            let entries = (0..m)
                .map(|_| loop {
                    let v = ring.sample(&mut rng);
                    if !(opts.nonzero && ring.is_zero(v)) {
                        break v;
                    }
                })
                .collect();
            Ok(HashVector::from_entries(entries))
        }
        HashMode::Pow2 => {
            let choices = ring.pow2_exponents();
            if choices < 2 {
                return Err(Error::DegenerateDomain(
                    "power-of-two hash entries over this modulus can only be 1".into(),
                ));
            }
            let exponents: Vec<u32> = (0..m).map(|_| rng.gen_range(0..choices)).collect();
            Ok(HashVector {
                entries: exponents.iter().map(|&e| ring.pow2(e)).collect(),
                mode: HashMode::Pow2,
                exponents,
                secret: true,
            })
        }
    }
}

/// Secret error vector for the error-augmented checksum. Exact mode only.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorConfig {
    /// Secret residue modulus; a proper divisor of `t` greater than 1.
    pub r: u64,
    pub t: u64,
    /// Entries are multiples of `r` in `[0, t)`.
    pub vector: Vec<u64>,
    pub seed: u64,
}

impl ErrorConfig {
    pub fn validate_modulus(r: u64, t: u64) -> Result<()> {
        if r <= 1 || r >= t {
            return Err(Error::InvalidErrorConfig(format!(
                "r = {r} must satisfy 1 < r < t = {t}"
            )));
        }
        if !t.is_multiple_of(r) {
            return Err(Error::InvalidErrorConfig(format!("r = {r} does not divide t = {t}")));
        }
        Ok(())
    }

    pub fn new(r: u64, t: u64, vector: Vec<u64>) -> Result<Self> {
        Self::validate_modulus(r, t)?;
        if let Some(bad) = vector.iter().find(|&&v| v >= t || v % r != 0) {
            return Err(Error::InvalidErrorConfig(format!(
                "error entry {bad} is not a multiple of {r} below {t}"
            )));
        }
        Ok(ErrorConfig {
            r,
            t,
            vector,
            seed: 0,
        })
    }

    /// Draws `n` uniform multiples of `r` in `[0, t)`.
    pub fn generate(n: usize, r: u64, t: u64, seed: u64) -> Result<Self> {
        Self::validate_modulus(r, t)?;
        if n == 0 {
            return Err(Error::dim("error vector length must be at least 1"));
        }
        let mut rng = seed::rng(seed, "error-vector");
        let steps = t / r;
        let vector = (0..n).map(|_| rng.gen_range(0..steps) * r).collect();
        Ok(ErrorConfig { r, t, vector, seed })
    }

    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }

    pub fn le_bytes(&self) -> Vec<u8> {
        self.vector.iter().flat_map(|e| e.to_le_bytes()).collect()
    }
}
