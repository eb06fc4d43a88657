//! Malicious-server and fault models applied to result ciphertexts in
//! transit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendRegistry, CipherMatrix, HeBackend, PlainMatrix};
use crate::checksum::compute::vec_mat;
use crate::checksum::{HashVector, Ring};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::params::Mode;
use crate::protocol::client::AnyHash;
use crate::protocol::message::Message;
use crate::protocol::transport::Transport;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TamperKind {
    /// Add `M` to the result region, leaving proofs alone.
    Additive,
    /// Substitute the result region.
    Replace,
    /// Random well-formed ciphertext of the right shape.
    Fabricate,
    /// Flip one payload bit.
    Bitflip,
    /// Add `M` to the result and `h·M` to the proof row with a leaked `h`.
    ForgeKnownHash,
}

impl TamperKind {
    pub const ALL: [TamperKind; 5] = [
        TamperKind::Additive,
        TamperKind::Replace,
        TamperKind::Fabricate,
        TamperKind::Bitflip,
        TamperKind::ForgeKnownHash,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TamperKind::Additive => "additive",
            TamperKind::Replace => "replace",
            TamperKind::Fabricate => "fabricate",
            TamperKind::Bitflip => "bitflip",
            TamperKind::ForgeKnownHash => "forge_known_hash",
        }
    }
}

impl std::str::FromStr for TamperKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TamperKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s || (s == "forge" && *k == TamperKind::ForgeKnownHash))
            .ok_or_else(|| Error::TamperSpec(format!("unknown tamper kind {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TamperSpec {
    pub kind: TamperKind,
    /// `M` for additive/forge, the substitute for replace. When absent a
    /// random single-entry perturbation (or random matrix for replace) is
    /// drawn per response.
    pub payload: Option<PlainMatrix>,
    /// Bit offset into the scalar data for bitflip; random when absent.
    pub bit: Option<u64>,
    pub seed: u64,
    pub leaked_hash: Option<AnyHash>,
    /// Trailing proof rows and columns in the response layout.
    pub proof_rows: usize,
    pub proof_cols: usize,
}

impl TamperSpec {
    pub fn new(kind: TamperKind, seed: u64) -> Self {
        TamperSpec {
            kind,
            payload: None,
            bit: None,
            seed,
            leaked_hash: None,
            proof_rows: 1,
            proof_cols: 0,
        }
    }

    pub fn with_payload(mut self, m: impl Into<PlainMatrix>) -> Self {
        self.payload = Some(m.into());
        self
    }

    pub fn with_leaked_hash(mut self, h: AnyHash) -> Self {
        self.leaked_hash = Some(h);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.leaked_hash) {
            (TamperKind::ForgeKnownHash, None) => {
                return Err(Error::TamperSpec("forgery needs a leaked hash vector".into()))
            }
            (TamperKind::ForgeKnownHash, Some(_)) if self.proof_rows != 1 || self.proof_cols != 0 => {
                return Err(Error::TamperSpec("forgery supports a single row proof only".into()))
            }
            (TamperKind::ForgeKnownHash, Some(_)) => {}
            (_, Some(_)) => {
                return Err(Error::TamperSpec(format!(
                    "{} tampering must not reference a hash vector",
                    self.kind.as_str()
                )))
            }
            (_, None) => {}
        }
        if self.bit.is_some() && self.kind != TamperKind::Bitflip {
            return Err(Error::TamperSpec("a bit index only applies to bitflip".into()));
        }
        Ok(())
    }
}

/// A forged result and its matching proof row.
pub type Forgery<T> = (Matrix<T>, Vec<T>);

/// `(C + M, proof + h·M)`: passes verification whenever `h` is the client's
/// hash.
pub fn forge_with_known_hash<R: Ring>(
    ring: &R,
    c: &Matrix<R::Elem>,
    proof: &[R::Elem],
    h: &HashVector<R::Elem>,
    m: &Matrix<R::Elem>,
) -> Result<Forgery<R::Elem>> {
    if (m.rows(), m.cols()) != (c.rows(), c.cols()) || h.len() != c.rows() || proof.len() != c.cols() {
        return Err(Error::dim(format!(
            "forgery of a {}x{} result with a {}x{} perturbation, hash of length {} and proof of length {}",
            c.rows(),
            c.cols(),
            m.rows(),
            m.cols(),
            h.len(),
            proof.len()
        )));
    }
    let data = c.as_slice().iter().zip(m.as_slice()).map(|(&x, &d)| ring.add(x, d)).collect();
    let hm = vec_mat(ring, &h.entries, m);
    let proof = proof.iter().zip(hm).map(|(&p, d)| ring.add(p, d)).collect();
    Ok((Matrix::new(c.rows(), c.cols(), data)?, proof))
}

/// Result-region shape of a response ciphertext.
fn region(ct: &CipherMatrix, spec: &TamperSpec) -> Result<(usize, usize)> {
    if spec.proof_rows > ct.rows || spec.proof_cols > ct.cols {
        return Err(Error::TamperSpec(format!(
            "{}x{} response cannot hold {} proof rows and {} proof columns",
            ct.rows, ct.cols, spec.proof_rows, spec.proof_cols
        )));
    }
    Ok((ct.rows - spec.proof_rows, ct.cols - spec.proof_cols))
}

fn check_region(p: &PlainMatrix, m: usize, k: usize) -> Result<()> {
    if (p.rows(), p.cols()) != (m, k) {
        return Err(Error::TamperSpec(format!(
            "tamper payload is {}x{}, result region is {m}x{k}",
            p.rows(),
            p.cols()
        )));
    }
    Ok(())
}

/// Random nonzero perturbation of one result entry.
fn single_entry(mode: Mode, m: usize, k: usize, rng: &mut impl Rng) -> Result<PlainMatrix> {
    if m == 0 || k == 0 {
        return Err(Error::TamperSpec("empty result region".into()));
    }
    let (i, j) = (rng.gen_range(0..m), rng.gen_range(0..k));
    Ok(match mode {
        Mode::Exact { t } => {
            let mut d = Matrix::zeros(m, k);
            d.set(i, j, rng.gen_range(1..t));
            PlainMatrix::Int(d)
        }
        Mode::Approximate { .. } => {
            let mut d = Matrix::zeros(m, k);
            let v: f64 = rng.gen_range(0.5..1.5);
            d.set(i, j, if rng.gen() { v } else { -v });
            PlainMatrix::Real(d)
        }
    })
}

fn random_matrix(mode: Mode, m: usize, k: usize, rng: &mut impl Rng) -> PlainMatrix {
    match mode {
        Mode::Exact { t } => PlainMatrix::Int(Matrix::from_fn(m, k, |_, _| rng.gen_range(0..t))),
        Mode::Approximate { .. } => PlainMatrix::Real(Matrix::from_fn(m, k, |_, _| rng.gen_range(-8.0..8.0))),
    }
}

/// Embeds a result-region matrix into a zero matrix of the response shape.
fn embed(p: &PlainMatrix, rows: usize, cols: usize) -> PlainMatrix {
    fn go<T: Copy + Default>(m: &Matrix<T>, rows: usize, cols: usize) -> Matrix<T> {
        Matrix::from_fn(rows, cols, |i, j| {
            if i < m.rows() && j < m.cols() {
                m.get(i, j)
            } else {
                T::default()
            }
        })
    }
    match p {
        PlainMatrix::Int(m) => PlainMatrix::Int(go(m, rows, cols)),
        PlainMatrix::Real(m) => PlainMatrix::Real(go(m, rows, cols)),
    }
}

/// Applies `spec` to one result ciphertext using only keyless backend
/// operations.
pub fn apply_tamper(
    backend: &dyn HeBackend,
    ct: &CipherMatrix,
    spec: &TamperSpec,
    rng: &mut impl Rng,
) -> Result<CipherMatrix> {
    spec.validate()?;
    let mode = ct.params.mode;
    let (m, k) = region(ct, spec)?;
    match spec.kind {
        TamperKind::Additive => {
            let delta = match &spec.payload {
                Some(p) => {
                    check_region(p, m, k)?;
                    p.clone()
                }
                None => single_entry(mode, m, k, rng)?,
            };
            backend.add_plain(ct, &embed(&delta, ct.rows, ct.cols))
        }
        TamperKind::Replace => {
            let substitute = match &spec.payload {
                Some(p) => {
                    check_region(p, m, k)?;
                    p.clone()
                }
                None => random_matrix(mode, m, k, rng),
            };
            let fresh = backend.trivial_encrypt(ct, &embed(&substitute, ct.rows, ct.cols))?;
            splice(backend, ct, &fresh, m, k)
        }
        TamperKind::Fabricate => {
            let layout = backend.payload_layout(ct)?;
            let mut out = ct.clone();
            let width = layout.scalar_width;
            for chunk in out.payload[layout.data_offset..].chunks_exact_mut(width).take(layout.scalar_count) {
                let v: u128 = rng.gen::<u128>() & low_mask(layout.value_bits);
                chunk.copy_from_slice(&v.to_le_bytes()[..width]);
            }
            Ok(out)
        }
        TamperKind::Bitflip => {
            let layout = backend.payload_layout(ct)?;
            if layout.scalar_count == 0 {
                return Err(Error::TamperSpec("no payload scalars to flip".into()));
            }
            let bits = layout.value_bits.min(8 * layout.scalar_width as u32) as u64;
            let offset = match spec.bit {
                Some(b) => b,
                None => rng.gen_range(0..layout.scalar_count as u64) * bits + rng.gen_range(0..bits),
            };
            let (scalar, bit) = ((offset / bits) as usize, (offset % bits) as usize);
            if scalar >= layout.scalar_count {
                return Err(Error::TamperSpec(format!("bit {offset} is outside the payload")));
            }
            let mut out = ct.clone();
            out.payload[layout.data_offset + scalar * layout.scalar_width + bit / 8] ^= 1 << (bit % 8);
            Ok(out)
        }
        TamperKind::ForgeKnownHash => {
            let delta = match &spec.payload {
                Some(p) => {
                    check_region(p, m, k)?;
                    p.clone()
                }
                None => single_entry(mode, m, k, rng)?,
            };
            let full = match (spec.leaked_hash.as_ref(), &delta, mode) {
                (Some(AnyHash::Int(h)), PlainMatrix::Int(d), Mode::Exact { t }) => {
                    let ring = crate::checksum::ModRing::new(t);
                    stack_proof(d, vec_mat(&ring, &h.entries, d), h.len())?.into()
                }
                (Some(AnyHash::Real(h)), PlainMatrix::Real(d), Mode::Approximate { .. }) => {
                    let ring = crate::checksum::RealRing::default();
                    stack_proof(d, vec_mat(&ring, &h.entries, d), h.len())?.into()
                }
                _ => return Err(Error::TamperSpec("leaked hash does not match the response domain".into())),
            };
            backend.add_plain(ct, &full)
        }
    }
}

fn stack_proof<T: Copy + Default>(d: &Matrix<T>, proof: Vec<T>, hash_len: usize) -> Result<Matrix<T>> {
    if hash_len != d.rows() {
        return Err(Error::TamperSpec(format!(
            "leaked hash has {hash_len} entries, result has {} rows",
            d.rows()
        )));
    }
    d.vstack(&Matrix::new(1, d.cols(), proof)?)
}

fn low_mask(bits: u32) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

/// Copies the `m×k` result region of every component from `fresh` into `ct`.
fn splice(backend: &dyn HeBackend, ct: &CipherMatrix, fresh: &CipherMatrix, m: usize, k: usize) -> Result<CipherMatrix> {
    let a = backend.payload_layout(ct)?;
    let b = backend.payload_layout(fresh)?;
    if a != b {
        return Err(Error::Backend("substitute ciphertext has a different layout".into()));
    }
    let mut out = ct.clone();
    let w = a.scalar_width;
    let components = a.scalar_count / a.component_len.max(1);
    for c in 0..components {
        for i in 0..m {
            let start = a.data_offset + (c * a.component_len + i * ct.cols) * w;
            let end = start + k * w;
            out.payload[start..end].copy_from_slice(&fresh.payload[start..end]);
        }
    }
    Ok(out)
}

/// Tampers result frames; every other frame passes through unchanged.
pub struct Tamperer {
    spec: TamperSpec,
    registry: BackendRegistry,
    rng: ChaCha20Rng,
    pub tampered: u64,
}

impl Tamperer {
    pub fn new(spec: TamperSpec, registry: BackendRegistry) -> Result<Self> {
        spec.validate()?;
        let rng = ChaCha20Rng::from_seed(seed::derive(spec.seed, "tamper"));
        Ok(Tamperer {
            spec,
            registry,
            rng,
            tampered: 0,
        })
    }

    pub fn spec(&self) -> &TamperSpec {
        &self.spec
    }

    pub fn tamper_reply(&mut self, reply: &[u8]) -> Result<Vec<u8>> {
        let Ok(Message::Result { session, ciphertext }) = Message::decode(reply) else {
            return Ok(reply.to_vec());
        };
        let backend = self.registry.create(ciphertext.backend_id, ciphertext.params)?;
        let ciphertext = apply_tamper(&*backend, &ciphertext, &self.spec, &mut self.rng)?;
        self.tampered += 1;
        Message::Result { session, ciphertext }.encode()
    }
}

/// A transport whose server replies pass through a [`Tamperer`].
pub struct TamperTransport<T> {
    inner: T,
    tamperer: Tamperer,
}

impl<T> TamperTransport<T> {
    pub fn new(inner: T, tamperer: Tamperer) -> Self {
        TamperTransport { inner, tamperer }
    }

    pub fn tampered(&self) -> u64 {
        self.tamperer.tampered
    }
}

impl<T: Transport> Transport for TamperTransport<T> {
    fn exchange(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        let reply = self.inner.exchange(request)?;
        self.tamperer.tamper_reply(&reply)
    }
}
