use std::fmt::Debug;

use rand::Rng;

use crate::error::Result;
use crate::matrix::{self, Matrix};

use super::verify::Residuals;

/// Scalar arithmetic for the two plaintext domains.
pub trait Ring: Clone + Debug + Send + Sync {
    type Elem: Copy + Default + PartialEq + Debug + Send + Sync + 'static;

    fn add(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn sub(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn mul(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;

    /// `a * 2^e`, evaluated without a general multiplication.
    fn shl(&self, a: Self::Elem, e: u32) -> Self::Elem;
    fn pow2(&self, e: u32) -> Self::Elem;
    /// Number of admissible power-of-two hash exponents.
    fn pow2_exponents(&self) -> u32;

    fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> Self::Elem;
    fn is_zero(&self, a: Self::Elem) -> bool {
        a == Self::Elem::default()
    }

    fn matmul(&self, a: &Matrix<Self::Elem>, b: &Matrix<Self::Elem>) -> Result<Matrix<Self::Elem>>;

    /// Discrepancy between a proof entry and the client's recomputation.
    fn residual(&self, recomputed: Self::Elem, proof: Self::Elem) -> Self::Elem;
    /// Acceptance threshold for a proof row.
    fn tolerance(&self, proof: &[Self::Elem]) -> f64;
    fn accepts(&self, residual: Self::Elem, tolerance: f64) -> bool;
    fn pack(residuals: Vec<Self::Elem>) -> Residuals;
}

/// Integers modulo `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModRing {
    t: u64,
}

impl ModRing {
    pub fn new(t: u64) -> Self {
        assert!(t >= 2, "modulus must be at least 2");
        ModRing { t }
    }

    pub fn modulus(&self) -> u64 {
        self.t
    }

    pub fn reduce(&self, v: u64) -> u64 {
        v % self.t
    }
}

impl Ring for ModRing {
    type Elem = u64;

    #[inline]
    fn add(&self, a: u64, b: u64) -> u64 {
        ((a as u128 + b as u128) % self.t as u128) as u64
    }

    #[inline]
    fn sub(&self, a: u64, b: u64) -> u64 {
        ((a as u128 + self.t as u128 - (b % self.t) as u128) % self.t as u128) as u64
    }

    #[inline]
    fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.t as u128) as u64
    }

    #[inline]
    fn shl(&self, a: u64, e: u32) -> u64 {
        (((a as u128) << e) % self.t as u128) as u64
    }

    fn pow2(&self, e: u32) -> u64 {
        self.shl(1, e)
    }

    fn pow2_exponents(&self) -> u32 {
        // 2^e < t for every admissible exponent.
        u64::BITS - (self.t - 1).leading_zeros()
    }

    fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> u64 {
        rng.gen_range(0..self.t)
    }

    fn matmul(&self, a: &Matrix<u64>, b: &Matrix<u64>) -> Result<Matrix<u64>> {
        matrix::matmul_mod(a, b, self.t)
    }

    fn residual(&self, recomputed: u64, proof: u64) -> u64 {
        self.sub(proof, recomputed)
    }

    fn tolerance(&self, _proof: &[u64]) -> f64 {
        0.0
    }

    fn accepts(&self, residual: u64, _tolerance: f64) -> bool {
        residual == 0
    }

    fn pack(residuals: Vec<u64>) -> Residuals {
        Residuals::Exact(residuals)
    }
}

/// Fixed-point reals, handled client-side as `f64`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RealRing {
    tolerance: f64,
}

impl RealRing {
    /// Largest power-of-two hash exponent is `2^(POW2_EXPONENTS - 1)`.
    pub const POW2_EXPONENTS: u32 = 8;

    pub fn new(tolerance: f64) -> Self {
        RealRing { tolerance }
    }

    pub fn relative_tolerance(&self) -> f64 {
        self.tolerance
    }
}

impl Default for RealRing {
    fn default() -> Self {
        RealRing::new(crate::params::APPROX_TOLERANCE)
    }
}

impl Ring for RealRing {
    type Elem = f64;

    fn add(&self, a: f64, b: f64) -> f64 {
        a + b
    }

    fn sub(&self, a: f64, b: f64) -> f64 {
        a - b
    }

    fn mul(&self, a: f64, b: f64) -> f64 {
        a * b
    }

    fn shl(&self, a: f64, e: u32) -> f64 {
        // Exponent adjustment; exact for finite inputs.
        a * f64::from_bits(((1023 + e as u64) & 0x7ff) << 52)
    }

    fn pow2(&self, e: u32) -> f64 {
        self.shl(1.0, e)
    }

    fn pow2_exponents(&self) -> u32 {
        Self::POW2_EXPONENTS
    }

    fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> f64 {
        rng.gen_range(-1.0..1.0)
    }

    fn matmul(&self, a: &Matrix<f64>, b: &Matrix<f64>) -> Result<Matrix<f64>> {
        matrix::matmul_real(a, b)
    }

    fn residual(&self, recomputed: f64, proof: f64) -> f64 {
        (recomputed - proof).abs()
    }

    fn tolerance(&self, proof: &[f64]) -> f64 {
        let scale = proof.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        self.tolerance * (1.0 + scale)
    }

    fn accepts(&self, residual: f64, tolerance: f64) -> bool {
        // NaN never passes.
        residual <= tolerance
    }

    fn pack(residuals: Vec<f64>) -> Residuals {
        Residuals::Approx(residuals)
    }
}
