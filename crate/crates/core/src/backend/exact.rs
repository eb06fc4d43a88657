use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::matrix::{matmul_mod, Matrix};
use crate::params::PlainParams;

use super::linear::{self, CipherArith, Encoded, PREFIX_LEN};
use super::{
    check_backend, check_params, BackendDescriptor, BackendId, CipherMatrix, CounterCell, HeBackend,
    OpCounters, Operand, PayloadLayout, PlainMatrix, SecretKey,
};

#[derive(Clone, Copy, Debug)]
struct ZtArith {
    t: u64,
}

impl CipherArith for ZtArith {
    type S = u64;

    fn add(&self, a: u64, b: u64) -> u64 {
        ((a as u128 + b as u128) % self.t as u128) as u64
    }

    fn sub(&self, a: u64, b: u64) -> u64 {
        ((a as u128 + self.t as u128 - b as u128) % self.t as u128) as u64
    }

    fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.t as u128) as u64
    }

    fn reduce(&self, raw: u64) -> u64 {
        raw % self.t
    }

    fn sample<G: Rng>(&self, rng: &mut G) -> u64 {
        rng.gen_range(0..self.t)
    }

    fn matmul(&self, a: &Matrix<u64>, b: &Matrix<u64>) -> Result<Matrix<u64>> {
        matmul_mod(a, b, self.t)
    }

    fn value_bits(&self) -> u32 {
        u64::BITS - (self.t - 1).leading_zeros()
    }
}

/// Exact arithmetic modulo the plaintext modulus `t`.
#[derive(Debug)]
pub struct ExactBackend {
    params: PlainParams,
    arith: ZtArith,
    counters: CounterCell,
    nonce: AtomicU64,
}

impl ExactBackend {
    pub fn new(params: PlainParams) -> Result<Self> {
        params.validate()?;
        let t = params.modulus()?;
        Ok(ExactBackend {
            params,
            arith: ZtArith { t },
            counters: CounterCell::default(),
            nonce: AtomicU64::new(0),
        })
    }

    pub fn with_modulus(t: u64) -> Result<Self> {
        Self::new(PlainParams::exact(t)?)
    }

    fn secret_scalar(&self, key: &SecretKey) -> u64 {
        let d = key.derive("exact-secret");
        let s = u64::from_le_bytes(d[..8].try_into().unwrap()) % self.arith.t;
        s.max(1)
    }

    fn open(&self, ct: &CipherMatrix) -> Result<Encoded<u64>> {
        check_backend(BackendId::EXACT, ct)?;
        check_params(&self.params, ct)?;
        Encoded::from_payload(&self.arith, &ct.payload, ct.rows, ct.cols)
    }

    fn seal(&self, enc: &Encoded<u64>) -> CipherMatrix {
        CipherMatrix {
            backend_id: BackendId::EXACT,
            params: self.params,
            rows: enc.rows(),
            cols: enc.cols(),
            payload: enc.to_payload(),
        }
    }

    fn plain_int<'a>(&self, p: &'a PlainMatrix) -> Result<&'a Matrix<u64>> {
        let m = p.as_int()?;
        m.check_domain(self.arith.t)?;
        Ok(m)
    }
}

impl HeBackend for ExactBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            id: BackendId::EXACT,
            name: "exact",
            exact: true,
            max_slots: self.params.slot_count,
            precision: None,
        }
    }

    fn params(&self) -> PlainParams {
        self.params
    }

    fn encrypt(&self, plain: &PlainMatrix, key: &SecretKey) -> Result<CipherMatrix> {
        let m = self.plain_int(plain)?;
        let nonce = self.nonce.fetch_add(1, Ordering::Relaxed);
        let mut rng = ChaCha20Rng::from_seed(key.derive(&format!("exact-stream-{nonce}")));
        let enc = linear::encrypt(&self.arith, m.clone(), key.key_id(), 0, self.secret_scalar(key), &mut rng);
        let ct = self.seal(&enc);
        self.counters.record_encryption(ct.payload.len());
        Ok(ct)
    }

    fn decrypt(&self, ct: &CipherMatrix, key: &SecretKey) -> Result<PlainMatrix> {
        let enc = self.open(ct)?;
        if enc.key_id != key.key_id() {
            return Err(Error::Authentication);
        }
        Ok(PlainMatrix::Int(linear::decrypt(&self.arith, &enc, self.secret_scalar(key))))
    }

    fn eval_matmul(&self, lhs: &CipherMatrix, rhs: Operand<'_>) -> Result<CipherMatrix> {
        let x = self.open(lhs)?;
        let out = match rhs {
            Operand::Plain(b) => {
                let b = self.plain_int(b)?;
                linear::matmul_plain(&self.arith, &x, b, 0)?
            }
            Operand::Cipher(b) => {
                let y = self.open(b)?;
                linear::matmul_cipher(&self.arith, &x, &y, 0)?
            }
        };
        self.counters.record_product(x.rows(), x.cols(), out.cols());
        Ok(self.seal(&out))
    }

    fn add_plain(&self, ct: &CipherMatrix, delta: &PlainMatrix) -> Result<CipherMatrix> {
        let x = self.open(ct)?;
        let out = linear::add_plain(&self.arith, &x, self.plain_int(delta)?)?;
        self.counters.record_op();
        Ok(self.seal(&out))
    }

    fn trivial_encrypt(&self, like: &CipherMatrix, plain: &PlainMatrix) -> Result<CipherMatrix> {
        let x = self.open(like)?;
        Ok(self.seal(&linear::trivial(&x, self.plain_int(plain)?.clone())))
    }

    fn payload_layout(&self, ct: &CipherMatrix) -> Result<PayloadLayout> {
        let x = self.open(ct)?;
        let component_len = x.rows() * x.cols();
        Ok(PayloadLayout {
            data_offset: PREFIX_LEN,
            scalar_width: 8,
            scalar_count: component_len * x.parts.len(),
            component_len,
            value_bits: self.arith.value_bits(),
        })
    }

    fn counters(&self) -> OpCounters {
        self.counters.snapshot()
    }

    fn reset_counters(&self) {
        self.counters.reset()
    }
}
