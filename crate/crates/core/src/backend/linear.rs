//! Shared machinery of the reference backends: a ciphertext is a list of
//! components `c_0 .. c_d` with plaintext `Σ c_i · s^i`.
//!
//! Payload layout: key id (8 bytes) | degree (1) | level (1) | components,
//! each `rows · cols` little-endian scalars in row-major order.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub(crate) const PREFIX_LEN: usize = 10;
pub(crate) const MAX_DEGREE: usize = 2;

pub(crate) trait Lane: Copy + Default + PartialEq + Send + Sync + 'static {
    const WIDTH: usize;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Lane for u64 {
    const WIDTH: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        u64::from_le_bytes(bytes.try_into().unwrap())
    }
}

impl Lane for u128 {
    const WIDTH: usize = 16;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        u128::from_le_bytes(bytes.try_into().unwrap())
    }
}

pub(crate) trait CipherArith: Send + Sync {
    type S: Lane;
    fn add(&self, a: Self::S, b: Self::S) -> Self::S;
    fn sub(&self, a: Self::S, b: Self::S) -> Self::S;
    fn mul(&self, a: Self::S, b: Self::S) -> Self::S;
    fn reduce(&self, raw: Self::S) -> Self::S;
    fn sample<G: Rng>(&self, rng: &mut G) -> Self::S;
    fn matmul(&self, a: &Matrix<Self::S>, b: &Matrix<Self::S>) -> Result<Matrix<Self::S>>;
    fn value_bits(&self) -> u32;
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Encoded<S> {
    pub key_id: [u8; 8],
    pub level: u8,
    pub parts: Vec<Matrix<S>>,
}

impl<S: Lane> Encoded<S> {
    pub fn rows(&self) -> usize {
        self.parts[0].rows()
    }

    pub fn cols(&self) -> usize {
        self.parts[0].cols()
    }

    pub fn degree(&self) -> usize {
        self.parts.len() - 1
    }

    pub fn to_payload(&self) -> Vec<u8> {
        let n = self.rows() * self.cols() * self.parts.len();
        let mut out = Vec::with_capacity(PREFIX_LEN + n * S::WIDTH);
        out.extend_from_slice(&self.key_id);
        out.push(self.degree() as u8);
        out.push(self.level);
        for part in &self.parts {
            for &v in part.as_slice() {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_payload<A: CipherArith<S = S>>(
        arith: &A,
        payload: &[u8],
        rows: usize,
        cols: usize,
    ) -> Result<Self> {
        if payload.len() < PREFIX_LEN {
            return Err(Error::Backend("ciphertext payload too short".into()));
        }
        let key_id: [u8; 8] = payload[..8].try_into().unwrap();
        let degree = payload[8] as usize;
        let level = payload[9];
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::Backend(format!("unsupported ciphertext degree {degree}")));
        }
        let per_part = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Backend("ciphertext dimensions overflow".into()))?;
        let expected = per_part
            .checked_mul((degree + 1) * S::WIDTH)
            .and_then(|n| n.checked_add(PREFIX_LEN))
            .ok_or_else(|| Error::Backend("ciphertext dimensions overflow".into()))?;
        if payload.len() != expected {
            return Err(Error::Backend(format!(
                "payload of {} bytes, expected {expected} for a degree-{degree} {rows}x{cols} ciphertext",
                payload.len()
            )));
        }
        if per_part == 0 {
            return Ok(Encoded {
                key_id,
                level,
                parts: vec![Matrix::zeros(rows, cols); degree + 1],
            });
        }
        let parts = payload[PREFIX_LEN..]
            .chunks_exact(per_part * S::WIDTH)
            .map(|chunk| {
                let data = chunk
                    .chunks_exact(S::WIDTH)
                    .map(|b| arith.reduce(S::read_le(b)))
                    .collect();
                Matrix::new(rows, cols, data)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Encoded { key_id, level, parts })
    }
}

pub(crate) fn encrypt<A: CipherArith, G: Rng>(
    arith: &A,
    plain: Matrix<A::S>,
    key_id: [u8; 8],
    level: u8,
    s: A::S,
    rng: &mut G,
) -> Encoded<A::S> {
    let mut c0 = plain;
    let c1 = Matrix::from_fn(c0.rows(), c0.cols(), |_, _| arith.sample(rng));
    for (x, &a) in c0.as_mut_slice().iter_mut().zip(c1.as_slice()) {
        *x = arith.sub(*x, arith.mul(a, s));
    }
    Encoded {
        key_id,
        level,
        parts: vec![c0, c1],
    }
}

pub(crate) fn decrypt<A: CipherArith>(arith: &A, enc: &Encoded<A::S>, s: A::S) -> Matrix<A::S> {
    // Horner in s over the components.
    let mut acc = enc.parts[enc.degree()].clone();
    for part in enc.parts[..enc.degree()].iter().rev() {
        for (x, &c) in acc.as_mut_slice().iter_mut().zip(part.as_slice()) {
            *x = arith.add(arith.mul(*x, s), c);
        }
    }
    acc
}

pub(crate) fn matmul_plain<A: CipherArith>(
    arith: &A,
    enc: &Encoded<A::S>,
    b: &Matrix<A::S>,
    level: u8,
) -> Result<Encoded<A::S>> {
    let parts = enc
        .parts
        .iter()
        .map(|p| arith.matmul(p, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(Encoded {
        key_id: enc.key_id,
        level,
        parts,
    })
}

pub(crate) fn matmul_cipher<A: CipherArith>(
    arith: &A,
    x: &Encoded<A::S>,
    y: &Encoded<A::S>,
    level: u8,
) -> Result<Encoded<A::S>> {
    if x.key_id != y.key_id {
        return Err(Error::ParamsMismatch("operands are encrypted under different keys".into()));
    }
    let degree = x.degree() + y.degree();
    if degree > MAX_DEGREE {
        return Err(Error::Backend(format!(
            "product degree {degree} exceeds the supported maximum {MAX_DEGREE}"
        )));
    }
    let (m, k) = (x.rows(), y.cols());
    let mut parts = vec![Matrix::zeros(m, k); degree + 1];
    for (i, xp) in x.parts.iter().enumerate() {
        for (j, yp) in y.parts.iter().enumerate() {
            let prod = arith.matmul(xp, yp)?;
            for (acc, &v) in parts[i + j].as_mut_slice().iter_mut().zip(prod.as_slice()) {
                *acc = arith.add(*acc, v);
            }
        }
    }
    Ok(Encoded {
        key_id: x.key_id,
        level,
        parts,
    })
}

pub(crate) fn add_plain<A: CipherArith>(
    arith: &A,
    enc: &Encoded<A::S>,
    delta: &Matrix<A::S>,
) -> Result<Encoded<A::S>> {
    if (delta.rows(), delta.cols()) != (enc.rows(), enc.cols()) {
        return Err(Error::dim(format!(
            "cannot add a {}x{} plaintext to a {}x{} ciphertext",
            delta.rows(),
            delta.cols(),
            enc.rows(),
            enc.cols()
        )));
    }
    let mut out = enc.clone();
    for (x, &d) in out.parts[0].as_mut_slice().iter_mut().zip(delta.as_slice()) {
        *x = arith.add(*x, d);
    }
    Ok(out)
}

pub(crate) fn trivial<S: Lane>(like: &Encoded<S>, plain: Matrix<S>) -> Encoded<S> {
    let (r, c) = (plain.rows(), plain.cols());
    let mut parts = vec![plain];
    parts.extend((0..like.degree()).map(|_| Matrix::zeros(r, c)));
    Encoded {
        key_id: like.key_id,
        level: like.level,
        parts,
    }
}
