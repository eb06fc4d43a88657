//! Homomorphic evaluation backends.
//!
//! The two reference backends emulate the semantics of an exact (BFV/BGV
//! style) and an approximate (CKKS style) scheme with a linear secret-key
//! encoding `p = c0 + c1·s + c2·s²`. The server evaluates products on the
//! encoding without the key and the client decrypts in time linear in the
//! matrix size. The encoding is NOT cryptographically secure: a production
//! deployment implements [`HeBackend`] over a real FHE library.

mod approx;
mod counters;
mod exact;
mod key;
mod linear;
mod registry;
pub mod wire;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::params::PlainParams;

pub use approx::ApproxBackend;
pub use counters::{CounterCell, OpCounters};
pub use exact::ExactBackend;
pub use key::SecretKey;
pub use registry::{BackendRegistry, Constructor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BackendId(pub u8);

impl BackendId {
    pub const EXACT: BackendId = BackendId(0x01);
    pub const APPROXIMATE: BackendId = BackendId(0x02);

    pub fn name(self) -> &'static str {
        match self {
            BackendId::EXACT => "exact",
            BackendId::APPROXIMATE => "approximate",
            _ => "custom",
        }
    }
}

impl std::str::FromStr for BackendId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "bfv" | "bgv" => Ok(BackendId::EXACT),
            "approximate" | "approx" | "ckks" => Ok(BackendId::APPROXIMATE),
            other => Err(Error::Config(format!("unknown backend {other:?}"))),
        }
    }
}

impl std::fmt::Display for BackendId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BackendDescriptor {
    pub id: BackendId,
    pub name: &'static str,
    pub exact: bool,
    pub max_slots: u32,
    /// Worst-case encoding error per entry (approximate backends).
    pub precision: Option<f64>,
}

/// Plaintext at the backend boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "elem", content = "matrix", rename_all = "snake_case")]
pub enum PlainMatrix {
    Int(Matrix<u64>),
    Real(Matrix<f64>),
}

impl PlainMatrix {
    pub fn rows(&self) -> usize {
        match self {
            PlainMatrix::Int(m) => m.rows(),
            PlainMatrix::Real(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            PlainMatrix::Int(m) => m.cols(),
            PlainMatrix::Real(m) => m.cols(),
        }
    }

    pub fn as_int(&self) -> Result<&Matrix<u64>> {
        match self {
            PlainMatrix::Int(m) => Ok(m),
            PlainMatrix::Real(_) => Err(Error::ModeMismatch("expected an integer matrix".into())),
        }
    }

    pub fn as_real(&self) -> Result<&Matrix<f64>> {
        match self {
            PlainMatrix::Real(m) => Ok(m),
            PlainMatrix::Int(_) => Err(Error::ModeMismatch("expected a real matrix".into())),
        }
    }

    pub fn into_int(self) -> Result<Matrix<u64>> {
        match self {
            PlainMatrix::Int(m) => Ok(m),
            PlainMatrix::Real(_) => Err(Error::ModeMismatch("expected an integer matrix".into())),
        }
    }

    pub fn into_real(self) -> Result<Matrix<f64>> {
        match self {
            PlainMatrix::Real(m) => Ok(m),
            PlainMatrix::Int(_) => Err(Error::ModeMismatch("expected a real matrix".into())),
        }
    }

    pub fn to_text(&self) -> String {
        match self {
            PlainMatrix::Int(m) => m.to_text(),
            PlainMatrix::Real(m) => m.to_text(),
        }
    }
}

impl From<Matrix<u64>> for PlainMatrix {
    fn from(m: Matrix<u64>) -> Self {
        PlainMatrix::Int(m)
    }
}

impl From<Matrix<f64>> for PlainMatrix {
    fn from(m: Matrix<f64>) -> Self {
        PlainMatrix::Real(m)
    }
}

/// An encrypted matrix. The payload is owned and interpreted by the backend
/// named in `backend_id`.
#[derive(Clone, Debug, PartialEq)]
pub struct CipherMatrix {
    pub backend_id: BackendId,
    pub params: PlainParams,
    pub rows: usize,
    pub cols: usize,
    pub payload: Vec<u8>,
}

pub enum Operand<'a> {
    Plain(&'a PlainMatrix),
    Cipher(&'a CipherMatrix),
}

/// Where the scalars sit inside a reference-backend payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PayloadLayout {
    pub data_offset: usize,
    pub scalar_width: usize,
    pub scalar_count: usize,
    /// Scalars per encoding component (`rows · cols`).
    pub component_len: usize,
    /// Low bits of each scalar that carry information.
    pub value_bits: u32,
}

pub trait HeBackend: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;

    fn params(&self) -> PlainParams;

    fn encrypt(&self, plain: &PlainMatrix, key: &SecretKey) -> Result<CipherMatrix>;

    fn decrypt(&self, ct: &CipherMatrix, key: &SecretKey) -> Result<PlainMatrix>;

    /// `lhs · rhs` on encrypted `lhs`; `rhs` may be plain or encrypted.
    fn eval_matmul(&self, lhs: &CipherMatrix, rhs: Operand<'_>) -> Result<CipherMatrix>;

    /// Adds a plaintext to a ciphertext without the key.
    fn add_plain(&self, ct: &CipherMatrix, delta: &PlainMatrix) -> Result<CipherMatrix>;

    /// Keyless encryption of `plain` shaped like `like` (same key binding,
    /// degree and scale), as used for ciphertext-plaintext arithmetic.
    fn trivial_encrypt(&self, like: &CipherMatrix, plain: &PlainMatrix) -> Result<CipherMatrix>;

    fn payload_layout(&self, ct: &CipherMatrix) -> Result<PayloadLayout>;

    fn counters(&self) -> OpCounters;

    fn reset_counters(&self);
}

pub(crate) fn check_backend(expected: BackendId, ct: &CipherMatrix) -> Result<()> {
    if ct.backend_id != expected {
        return Err(Error::Backend(format!(
            "ciphertext from backend {:#04x} handed to backend {:#04x}",
            ct.backend_id.0, expected.0
        )));
    }
    Ok(())
}

pub(crate) fn check_params(own: &PlainParams, ct: &CipherMatrix) -> Result<()> {
    if own.mode != ct.params.mode {
        return Err(Error::ParamsMismatch(format!(
            "ciphertext parameters {:?} differ from backend parameters {:?}",
            ct.params.mode, own.mode
        )));
    }
    Ok(())
}
