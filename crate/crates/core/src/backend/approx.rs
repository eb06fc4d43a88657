use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::matrix::{matmul_wrapping, Matrix};
use crate::params::PlainParams;

use super::linear::{self, CipherArith, Encoded, MAX_DEGREE, PREFIX_LEN};
use super::{
    check_backend, check_params, BackendDescriptor, BackendId, CipherMatrix, CounterCell, HeBackend,
    OpCounters, Operand, PayloadLayout, PlainMatrix, SecretKey,
};

#[derive(Clone, Copy, Debug)]
struct Wrap128;

impl CipherArith for Wrap128 {
    type S = u128;

    fn add(&self, a: u128, b: u128) -> u128 {
        a.wrapping_add(b)
    }

    fn sub(&self, a: u128, b: u128) -> u128 {
        a.wrapping_sub(b)
    }

    fn mul(&self, a: u128, b: u128) -> u128 {
        a.wrapping_mul(b)
    }

    fn reduce(&self, raw: u128) -> u128 {
        raw
    }

    fn sample<G: Rng>(&self, rng: &mut G) -> u128 {
        rng.gen()
    }

    fn matmul(&self, a: &Matrix<u128>, b: &Matrix<u128>) -> Result<Matrix<u128>> {
        matmul_wrapping(a, b)
    }

    fn value_bits(&self) -> u32 {
        u128::BITS
    }
}

/// Fixed-point reals over `Z_{2^128}`. A fresh ciphertext is encoded at
/// `scale`; every product multiplies the scales, up to `scale²`.
#[derive(Debug)]
pub struct ApproxBackend {
    params: PlainParams,
    scale: f64,
    counters: CounterCell,
    nonce: AtomicU64,
}

/// Largest encoded magnitude accepted on encode.
const ENCODE_LIMIT: f64 = (1u128 << 120) as f64;

impl ApproxBackend {
    pub fn new(params: PlainParams) -> Result<Self> {
        params.validate()?;
        let scale = params.scale()?;
        Ok(ApproxBackend {
            params,
            scale,
            counters: CounterCell::default(),
            nonce: AtomicU64::new(0),
        })
    }

    pub fn with_scale(scale: f64) -> Result<Self> {
        Self::new(PlainParams::approximate(scale)?)
    }

    fn secret_scalar(&self, key: &SecretKey) -> u128 {
        let d = key.derive("approx-secret");
        u128::from_le_bytes(d[..16].try_into().unwrap()) | 1
    }

    fn factor(&self, level: u8) -> f64 {
        self.scale.powi(level as i32)
    }

    fn encode(&self, m: &Matrix<f64>, level: u8) -> Result<Matrix<u128>> {
        let factor = self.factor(level);
        let mut data = Vec::with_capacity(m.rows() * m.cols());
        for (pos, &x) in m.as_slice().iter().enumerate() {
            let v = (x * factor).round();
            if !v.is_finite() || v.abs() >= ENCODE_LIMIT {
                return Err(Error::Backend(format!(
                    "entry {x} at position {pos} cannot be encoded at scale {factor}"
                )));
            }
            data.push(v as i128 as u128);
        }
        Matrix::new(m.rows(), m.cols(), data)
    }

    fn decode(&self, m: &Matrix<u128>, level: u8) -> Matrix<f64> {
        let factor = self.factor(level);
        m.map(|v| v as i128 as f64 / factor)
    }

    fn open(&self, ct: &CipherMatrix) -> Result<Encoded<u128>> {
        check_backend(BackendId::APPROXIMATE, ct)?;
        check_params(&self.params, ct)?;
        let enc = Encoded::from_payload(&Wrap128, &ct.payload, ct.rows, ct.cols)?;
        if enc.level == 0 || enc.level as usize > MAX_DEGREE {
            return Err(Error::Backend(format!("unsupported scale level {}", enc.level)));
        }
        Ok(enc)
    }

    fn seal(&self, enc: &Encoded<u128>) -> CipherMatrix {
        CipherMatrix {
            backend_id: BackendId::APPROXIMATE,
            params: self.params,
            rows: enc.rows(),
            cols: enc.cols(),
            payload: enc.to_payload(),
        }
    }

    fn next_level(&self, a: u8, b: u8) -> Result<u8> {
        let level = a + b;
        if level as usize > MAX_DEGREE {
            return Err(Error::Backend(format!(
                "scale level {level} exceeds the supported maximum {MAX_DEGREE}"
            )));
        }
        Ok(level)
    }
}

impl HeBackend for ApproxBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            id: BackendId::APPROXIMATE,
            name: "approximate",
            exact: false,
            max_slots: self.params.slot_count,
            precision: Some(1.0 / self.scale),
        }
    }

    fn params(&self) -> PlainParams {
        self.params
    }

    fn encrypt(&self, plain: &PlainMatrix, key: &SecretKey) -> Result<CipherMatrix> {
        let encoded = self.encode(plain.as_real()?, 1)?;
        let nonce = self.nonce.fetch_add(1, Ordering::Relaxed);
        let mut rng = ChaCha20Rng::from_seed(key.derive(&format!("approx-stream-{nonce}")));
        let enc = linear::encrypt(&Wrap128, encoded, key.key_id(), 1, self.secret_scalar(key), &mut rng);
        let ct = self.seal(&enc);
        self.counters.record_encryption(ct.payload.len());
        Ok(ct)
    }

    fn decrypt(&self, ct: &CipherMatrix, key: &SecretKey) -> Result<PlainMatrix> {
        let enc = self.open(ct)?;
        if enc.key_id != key.key_id() {
            return Err(Error::Authentication);
        }
        let raw = linear::decrypt(&Wrap128, &enc, self.secret_scalar(key));
        Ok(PlainMatrix::Real(self.decode(&raw, enc.level)))
    }

    fn eval_matmul(&self, lhs: &CipherMatrix, rhs: Operand<'_>) -> Result<CipherMatrix> {
        let x = self.open(lhs)?;
        let out = match rhs {
            Operand::Plain(b) => {
                let level = self.next_level(x.level, 1)?;
                let b = self.encode(b.as_real()?, 1)?;
                linear::matmul_plain(&Wrap128, &x, &b, level)?
            }
            Operand::Cipher(b) => {
                let y = self.open(b)?;
                let level = self.next_level(x.level, y.level)?;
                linear::matmul_cipher(&Wrap128, &x, &y, level)?
            }
        };
        self.counters.record_product(x.rows(), x.cols(), out.cols());
        Ok(self.seal(&out))
    }

    fn add_plain(&self, ct: &CipherMatrix, delta: &PlainMatrix) -> Result<CipherMatrix> {
        let x = self.open(ct)?;
        let d = self.encode(delta.as_real()?, x.level)?;
        let out = linear::add_plain(&Wrap128, &x, &d)?;
        self.counters.record_op();
        Ok(self.seal(&out))
    }

    fn trivial_encrypt(&self, like: &CipherMatrix, plain: &PlainMatrix) -> Result<CipherMatrix> {
        let x = self.open(like)?;
        let p = self.encode(plain.as_real()?, x.level)?;
        Ok(self.seal(&linear::trivial(&x, p)))
    }

    fn payload_layout(&self, ct: &CipherMatrix) -> Result<PayloadLayout> {
        let x = self.open(ct)?;
        let component_len = x.rows() * x.cols();
        Ok(PayloadLayout {
            data_offset: PREFIX_LEN,
            scalar_width: 16,
            scalar_count: component_len * x.parts.len(),
            component_len,
            value_bits: u128::BITS,
        })
    }

    fn counters(&self) -> OpCounters {
        self.counters.snapshot()
    }

    fn reset_counters(&self) {
        self.counters.reset()
    }
}
