use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed-form costs of checksumming an `m×n` operand for an `m×n · n×k` product.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadModel {
    pub m: u64,
    pub n: u64,
    pub k: u64,
    /// Extra plaintext relative to the operand: `1/m`.
    pub plaintext_expansion: Ratio<u64>,
    /// Upper bound on ciphertext growth: `1 + 1/m`.
    pub ciphertext_expansion_bound: Ratio<u64>,
    pub server_multadds_plain: u64,
    pub server_multadds_checked: u64,
    pub client_checksum_multadds: u64,
    /// Shift-adds when the hash uses power-of-two entries (and no multiplies).
    pub client_checksum_shiftadds_pow2: u64,
    /// `m·k` mult-adds for `h·C` plus `k` comparisons.
    pub client_verify_ops: u64,
}

impl OverheadModel {
    /// `(m+1)/m`.
    pub fn server_ratio(&self) -> Ratio<u64> {
        Ratio::new(self.server_multadds_checked, self.server_multadds_plain)
    }

    pub fn server_ratio_f64(&self) -> f64 {
        self.server_multadds_checked as f64 / self.server_multadds_plain as f64
    }
}

pub fn predict_overheads(m: u64, n: u64, k: u64) -> Result<OverheadModel> {
    if m == 0 || n == 0 || k == 0 {
        return Err(Error::dim(format!("dimensions must be positive, got ({m}, {n}, {k})")));
    }
    let dims_err = || Error::dim("dimension product overflows");
    let nk = n.checked_mul(k).ok_or_else(dims_err)?;
    Ok(OverheadModel {
        m,
        n,
        k,
        plaintext_expansion: Ratio::new(1, m),
        ciphertext_expansion_bound: Ratio::new(m + 1, m),
        server_multadds_plain: m.checked_mul(nk).ok_or_else(dims_err)?,
        server_multadds_checked: (m + 1).checked_mul(nk).ok_or_else(dims_err)?,
        client_checksum_multadds: m * n,
        client_checksum_shiftadds_pow2: m * n,
        client_verify_ops: m * k + k,
    })
}
