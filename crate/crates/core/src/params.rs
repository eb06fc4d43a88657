use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Plaintext modulus used for plain and dual checks by default.
pub const DEFAULT_PLAIN_MODULUS: u64 = 65537;
/// Plaintext modulus used for error-augmented checks by default. Power of two
/// so that it has non-trivial divisors.
pub const DEFAULT_ERROR_MODULUS: u64 = 1 << 20;
/// Default secret residue modulus for error-augmented checks.
pub const DEFAULT_ERROR_R: u64 = 1 << 10;
/// Default fixed-point scale of the approximate backend.
pub const DEFAULT_SCALE: f64 = (1u64 << 40) as f64;
/// Relative tolerance for approximate-mode proof comparisons.
pub const APPROX_TOLERANCE: f64 = 1.0 / (1u64 << 20) as f64;
pub const DEFAULT_SLOT_COUNT: u32 = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    /// Residues modulo `t`.
    Exact { t: u64 },
    /// Fixed-point reals encoded at `scale`.
    Approximate { scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlainParams {
    #[serde(flatten)]
    pub mode: Mode,
    #[serde(default = "default_slots")]
    pub slot_count: u32,
}

fn default_slots() -> u32 {
    DEFAULT_SLOT_COUNT
}

impl PlainParams {
    pub fn exact(t: u64) -> Result<Self> {
        let p = PlainParams {
            mode: Mode::Exact { t },
            slot_count: DEFAULT_SLOT_COUNT,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn approximate(scale: f64) -> Result<Self> {
        let p = PlainParams {
            mode: Mode::Approximate { scale },
            slot_count: DEFAULT_SLOT_COUNT,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Exact { t } if t < 2 => {
                Err(Error::InvalidParams(format!("plaintext modulus {t} < 2")))
            }
            Mode::Approximate { scale } if !(scale.is_finite() && scale > 0.0) => {
                Err(Error::InvalidParams(format!("scale {scale} must be positive")))
            }
            _ if self.slot_count == 0 => Err(Error::InvalidParams("slot count is zero".into())),
            _ => Ok(()),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.mode, Mode::Exact { .. })
    }

    /// The plaintext modulus, or a mode error in approximate mode.
    pub fn modulus(&self) -> Result<u64> {
        match self.mode {
            Mode::Exact { t } => Ok(t),
            Mode::Approximate { .. } => Err(Error::ModeMismatch(
                "approximate parameters have no plaintext modulus".into(),
            )),
        }
    }

    pub fn scale(&self) -> Result<f64> {
        match self.mode {
            Mode::Approximate { scale } => Ok(scale),
            Mode::Exact { .. } => Err(Error::ModeMismatch(
                "exact parameters have no fixed-point scale".into(),
            )),
        }
    }
}

impl Default for PlainParams {
    fn default() -> Self {
        PlainParams {
            mode: Mode::Exact {
                t: DEFAULT_PLAIN_MODULUS,
            },
            slot_count: DEFAULT_SLOT_COUNT,
        }
    }
}
