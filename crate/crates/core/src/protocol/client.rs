//! Client session driver: protect, encrypt, send, receive, decrypt, verify.

use serde::{Deserialize, Serialize};

use crate::backend::{BackendId, BackendRegistry, CipherMatrix, HeBackend, PlainMatrix, SecretKey};
use crate::checksum::{
    attach_checksum, attach_checksum_cols, compute_checksum, compute_checksum_with_error, compute_column_checksum,
    gen_hash_vector, normalize_square, recombine, verify, verify_dual, verify_with_error, CheckMode, ErrorConfig,
    HashOptions, HashVector, ModRing, RealRing, Recombine, ResultBundle, Ring, RowMeta, SquareStrategy,
    VerificationReport,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::params::{Mode, PlainParams, DEFAULT_ERROR_R};
use crate::seed;

use super::message::{Message, OperandBlob, OperandRef};
use super::transport::Transport;

/// Right-hand operand ownership.
#[derive(Clone, Debug, PartialEq)]
pub enum OperandB {
    /// Public function: sent as plaintext.
    Public(PlainMatrix),
    /// Client-owned function: sent encrypted.
    Secret(PlainMatrix),
    /// Server-owned matrix, referenced by name.
    Resident(String),
}

#[derive(Clone, Debug)]
pub struct TaskSpec {
    pub a: PlainMatrix,
    pub b: OperandB,
    pub mode: CheckMode,
    pub hash: HashOptions,
    pub seed: u64,
    pub backend: BackendId,
    pub params: PlainParams,
    pub square: SquareStrategy,
    /// Residue modulus for error-augmented checks.
    pub error_r: u64,
    /// Encryption key; derived from `seed` when absent.
    pub key: Option<SecretKey>,
}

impl TaskSpec {
    /// Plain check, exact backend at the default modulus.
    pub fn new(a: impl Into<PlainMatrix>, b: OperandB) -> Self {
        TaskSpec {
            a: a.into(),
            b,
            mode: CheckMode::Plain,
            hash: HashOptions::uniform(),
            seed: 0,
            backend: BackendId::EXACT,
            params: PlainParams::default(),
            square: SquareStrategy::default(),
            error_r: DEFAULT_ERROR_R,
            key: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let exact = self.params.is_exact();
        match (self.backend, exact) {
            (BackendId::EXACT, false) | (BackendId::APPROXIMATE, true) => {
                return Err(Error::ModeMismatch(format!(
                    "{} backend with {} parameters",
                    self.backend,
                    if exact { "exact" } else { "approximate" }
                )))
            }
            _ => {}
        }
        if matches!(self.a, PlainMatrix::Int(_)) != exact {
            return Err(Error::ModeMismatch("operand A does not match the parameter mode".into()));
        }
        match self.mode {
            CheckMode::WithError => {
                let t = self.params.modulus().map_err(|_| {
                    Error::ModeMismatch("error-augmented checks need an exact backend".into())
                })?;
                ErrorConfig::validate_modulus(self.error_r, t)?;
            }
            CheckMode::Dual if !matches!(self.b, OperandB::Secret(_)) => {
                return Err(Error::ModeMismatch("dual checks need a client-secret B".into()));
            }
            _ => {}
        }
        if let OperandB::Public(b) | OperandB::Secret(b) = &self.b {
            if b.rows() != self.a.cols() {
                return Err(Error::dim(format!(
                    "cannot multiply {}x{} by {}x{}",
                    self.a.rows(),
                    self.a.cols(),
                    b.rows(),
                    b.cols()
                )));
            }
            if matches!(b, PlainMatrix::Int(_)) != exact {
                return Err(Error::ModeMismatch("operand B does not match the parameter mode".into()));
            }
        }
        Ok(())
    }

    fn key(&self) -> SecretKey {
        self.key.clone().unwrap_or_else(|| SecretKey::from_bytes(seed::derive(self.seed, "client-key")))
    }
}

/// A hash vector over either plaintext domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "snake_case")]
pub enum AnyHash {
    Int(HashVector<u64>),
    Real(HashVector<f64>),
}

impl AnyHash {
    pub fn le_bytes(&self) -> Vec<u8> {
        match self {
            AnyHash::Int(h) => h.le_bytes(),
            AnyHash::Real(h) => h.le_bytes(),
        }
    }

    pub fn be_bytes(&self) -> Vec<u8> {
        match self {
            AnyHash::Int(h) => h.entries.iter().flat_map(|e| e.to_be_bytes()).collect(),
            AnyHash::Real(h) => h.entries.iter().flat_map(|e| e.to_bits().to_be_bytes()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSecret {
    pub rows: usize,
    pub hash: AnyHash,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorConfig>,
}

/// Everything the client must keep to decrypt and verify; stored in the
/// client-secret file and never sent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientSecrets {
    pub backend: BackendId,
    pub params: PlainParams,
    pub mode: CheckMode,
    pub seed: u64,
    pub key: SecretKey,
    pub plan: Recombine,
    pub blocks: Vec<BlockSecret>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_hash: Option<AnyHash>,
}

impl ClientSecrets {
    /// Byte strings that must never appear in client-to-server traffic:
    /// every hash and error vector in both byte orders, and the key.
    pub fn sensitive_patterns(&self) -> Vec<Vec<u8>> {
        let mut out = vec![self.key.as_bytes().to_vec()];
        let hashes = self.blocks.iter().map(|b| &b.hash).chain(self.col_hash.as_ref());
        for h in hashes {
            out.push(h.le_bytes());
            out.push(h.be_bytes());
        }
        for e in self.blocks.iter().filter_map(|b| b.error.as_ref()) {
            out.push(e.le_bytes());
            out.push(e.vector.iter().flat_map(|v| v.to_be_bytes()).collect());
        }
        out
    }

    fn backend(&self, registry: &BackendRegistry) -> Result<std::sync::Arc<dyn HeBackend>> {
        registry.create(self.backend, self.params)
    }
}

/// Encrypted, checksum-augmented operands ready to upload.
#[derive(Clone, Debug)]
pub struct Protected {
    /// One ciphertext of `(A_i; h_i·A_i)` per block.
    pub blocks: Vec<CipherMatrix>,
    /// Encrypted B (or `(B, B·h_Bᵀ)` in dual mode) when B is client-secret.
    pub rhs: Option<CipherMatrix>,
    pub secrets: ClientSecrets,
}

/// The client-visible result of a task.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub result: PlainMatrix,
    pub report: VerificationReport,
    pub secrets: ClientSecrets,
}

/// Glue between a scalar ring and the backend's plaintext type.
trait Domain: Ring {
    fn wrap(m: Matrix<Self::Elem>) -> PlainMatrix;
    fn unwrap(p: PlainMatrix) -> Result<Matrix<Self::Elem>>;
    fn wrap_hash(h: HashVector<Self::Elem>) -> AnyHash;
    fn unwrap_hash(h: &AnyHash) -> Result<&HashVector<Self::Elem>>;
    fn checksum_with_error(&self, a: &Matrix<Self::Elem>, h: &HashVector<Self::Elem>, err: &ErrorConfig)
        -> Result<Vec<Self::Elem>>;
    fn verify_with_error(
        &self,
        bundle: &ResultBundle<Self::Elem>,
        h: &HashVector<Self::Elem>,
        err: &ErrorConfig,
    ) -> Result<VerificationReport>;
}

impl Domain for ModRing {
    fn wrap(m: Matrix<u64>) -> PlainMatrix {
        PlainMatrix::Int(m)
    }

    fn unwrap(p: PlainMatrix) -> Result<Matrix<u64>> {
        p.into_int()
    }

    fn wrap_hash(h: HashVector<u64>) -> AnyHash {
        AnyHash::Int(h)
    }

    fn unwrap_hash(h: &AnyHash) -> Result<&HashVector<u64>> {
        match h {
            AnyHash::Int(h) => Ok(h),
            AnyHash::Real(_) => Err(Error::ModeMismatch("expected an integer hash vector".into())),
        }
    }

    fn checksum_with_error(&self, a: &Matrix<u64>, h: &HashVector<u64>, err: &ErrorConfig) -> Result<Vec<u64>> {
        compute_checksum_with_error(self, a, h, err)
    }

    fn verify_with_error(
        &self,
        bundle: &ResultBundle<u64>,
        h: &HashVector<u64>,
        err: &ErrorConfig,
    ) -> Result<VerificationReport> {
        verify_with_error(self, bundle, h, err)
    }
}

impl Domain for RealRing {
    fn wrap(m: Matrix<f64>) -> PlainMatrix {
        PlainMatrix::Real(m)
    }

    fn unwrap(p: PlainMatrix) -> Result<Matrix<f64>> {
        p.into_real()
    }

    fn wrap_hash(h: HashVector<f64>) -> AnyHash {
        AnyHash::Real(h)
    }

    fn unwrap_hash(h: &AnyHash) -> Result<&HashVector<f64>> {
        match h {
            AnyHash::Real(h) => Ok(h),
            AnyHash::Int(_) => Err(Error::ModeMismatch("expected a real hash vector".into())),
        }
    }

    fn checksum_with_error(&self, _: &Matrix<f64>, _: &HashVector<f64>, _: &ErrorConfig) -> Result<Vec<f64>> {
        Err(Error::ModeMismatch("error-augmented checks need an exact backend".into()))
    }

    fn verify_with_error(&self, _: &ResultBundle<f64>, _: &HashVector<f64>, _: &ErrorConfig) -> Result<VerificationReport> {
        Err(Error::ModeMismatch("error-augmented checks need an exact backend".into()))
    }
}

/// Hashes, checksums and encrypts the task's operands.
pub fn protect(task: &TaskSpec, registry: &BackendRegistry) -> Result<Protected> {
    task.validate()?;
    let backend = registry.create(task.backend, task.params)?;
    match task.params.mode {
        Mode::Exact { t } => protect_in(&ModRing::new(t), task, &*backend),
        Mode::Approximate { .. } => protect_in(&RealRing::default(), task, &*backend),
    }
}

fn protect_in<R: Domain>(ring: &R, task: &TaskSpec, backend: &dyn HeBackend) -> Result<Protected> {
    let key = task.key();
    let a = R::unwrap(task.a.clone())?;
    let normalized = normalize_square(&a, task.square)?;

    let mut blocks = Vec::with_capacity(normalized.blocks.len());
    let mut block_secrets = Vec::with_capacity(normalized.blocks.len());
    for (i, block) in normalized.blocks.iter().enumerate() {
        let h = gen_hash_vector(ring, block.rows(), task.hash, seed::derive_u64(task.seed, &format!("row-hash-{i}")))?;
        let (row, meta, error) = if task.mode == CheckMode::WithError {
            let t = task.params.modulus()?;
            let err = ErrorConfig::generate(
                block.cols(),
                task.error_r,
                t,
                seed::derive_u64(task.seed, &format!("error-{i}")),
            )?;
            (ring.checksum_with_error(block, &h, &err)?, RowMeta::with_error(format!("h{i}")), Some(err))
        } else {
            (compute_checksum(ring, block, &h)?, RowMeta::plain(format!("h{i}")), None)
        };
        let checked = attach_checksum(block, &[row], vec![meta])?;
        blocks.push(backend.encrypt(&R::wrap(checked.stacked()), &key)?);
        block_secrets.push(BlockSecret {
            rows: block.rows(),
            hash: R::wrap_hash(h),
            error,
        });
    }

    let (rhs, col_hash) = match &task.b {
        OperandB::Secret(b) => {
            let b = R::unwrap(b.clone())?;
            if task.mode == CheckMode::Dual {
                let hb = gen_hash_vector(ring, b.cols(), task.hash, seed::derive_u64(task.seed, "col-hash"))?;
                let col = compute_column_checksum(ring, &b, &hb)?;
                let checked = attach_checksum_cols(&b, &[col])?;
                (Some(backend.encrypt(&R::wrap(checked.stacked()), &key)?), Some(R::wrap_hash(hb)))
            } else {
                (Some(backend.encrypt(&R::wrap(b), &key)?), None)
            }
        }
        _ => (None, None),
    };

    Ok(Protected {
        blocks,
        rhs,
        secrets: ClientSecrets {
            backend: task.backend,
            params: task.params,
            mode: task.mode,
            seed: task.seed,
            key,
            plan: normalized.plan,
            blocks: block_secrets,
            col_hash,
        },
    })
}

/// Decrypts block results, verifies each against its hash and recombines.
/// The outcome is returned whatever the verdict.
pub fn finish(secrets: &ClientSecrets, results: &[CipherMatrix], registry: &BackendRegistry) -> Result<Outcome> {
    let backend = secrets.backend(registry)?;
    match secrets.params.mode {
        Mode::Exact { t } => finish_in(&ModRing::new(t), secrets, results, &*backend),
        Mode::Approximate { .. } => finish_in(&RealRing::default(), secrets, results, &*backend),
    }
}

fn finish_in<R: Domain>(
    ring: &R,
    secrets: &ClientSecrets,
    results: &[CipherMatrix],
    backend: &dyn HeBackend,
) -> Result<Outcome> {
    if results.len() != secrets.blocks.len() {
        return Err(Error::dim(format!(
            "{} results for {} blocks",
            results.len(),
            secrets.blocks.len()
        )));
    }
    let dual = secrets.mode == CheckMode::Dual;
    let mut parts = Vec::with_capacity(results.len());
    let mut reports = Vec::with_capacity(results.len());
    let mut offset = 0;
    for (ct, block) in results.iter().zip(&secrets.blocks) {
        let product = R::unwrap(backend.decrypt(ct, &secrets.key)?)?;
        if product.rows() != block.rows + 1 {
            return Err(Error::dim(format!(
                "result has {} rows, expected {}",
                product.rows(),
                block.rows + 1
            )));
        }
        let bundle = ResultBundle::split(&product, 1, usize::from(dual))?;
        let h = R::unwrap_hash(&block.hash)?;
        let report = match (secrets.mode, &block.error) {
            (CheckMode::WithError, Some(err)) => ring.verify_with_error(&bundle, h, err)?,
            (CheckMode::WithError, None) => {
                return Err(Error::InvalidErrorConfig("secret file lacks the error vector".into()))
            }
            (CheckMode::Dual, _) => {
                let hb = secrets
                    .col_hash
                    .as_ref()
                    .ok_or_else(|| Error::ModeMismatch("secret file lacks the column hash".into()))?;
                verify_dual(ring, &bundle, h, R::unwrap_hash(hb)?)?
            }
            (CheckMode::Plain, _) => verify(ring, &bundle, h)?,
        };
        reports.push((offset, report));
        offset += block.rows;
        parts.push(bundle.result);
    }
    let result = recombine(&secrets.plan, parts)?;
    let report = VerificationReport::merge(reports).ok_or_else(|| Error::dim("no blocks"))?;
    Ok(Outcome {
        result: R::wrap(result),
        report,
        secrets: secrets.clone(),
    })
}

/// Decrypts protected operand blocks back to the original matrix.
pub fn unprotect(secrets: &ClientSecrets, blocks: &[CipherMatrix], registry: &BackendRegistry) -> Result<PlainMatrix> {
    let backend = secrets.backend(registry)?;
    if blocks.len() != secrets.blocks.len() {
        return Err(Error::dim(format!("{} ciphertexts for {} blocks", blocks.len(), secrets.blocks.len())));
    }
    let mut parts = Vec::with_capacity(blocks.len());
    for (ct, block) in blocks.iter().zip(&secrets.blocks) {
        let plain = backend.decrypt(ct, &secrets.key)?;
        if plain.rows() != block.rows + 1 {
            return Err(Error::dim("ciphertext does not hold a protected block"));
        }
        parts.push(match plain {
            PlainMatrix::Int(m) => PlainMatrix::Int(m.row_slice(0..block.rows)),
            PlainMatrix::Real(m) => PlainMatrix::Real(m.row_slice(0..block.rows)),
        });
    }
    if parts.iter().all(|p| matches!(p, PlainMatrix::Int(_))) {
        let ints = parts.into_iter().map(PlainMatrix::into_int).collect::<Result<_>>()?;
        Ok(PlainMatrix::Int(recombine(&secrets.plan, ints)?))
    } else {
        let reals = parts.into_iter().map(PlainMatrix::into_real).collect::<Result<_>>()?;
        Ok(PlainMatrix::Real(recombine(&secrets.plan, reals)?))
    }
}

/// Verifies a decrypted result against one proof row per block, without a
/// server. Dual-mode column proofs are not part of this check.
pub fn verify_offline(secrets: &ClientSecrets, result: &PlainMatrix, proofs: &PlainMatrix) -> Result<VerificationReport> {
    match secrets.params.mode {
        Mode::Exact { t } => verify_offline_in(&ModRing::new(t), secrets, result, proofs),
        Mode::Approximate { .. } => verify_offline_in(&RealRing::default(), secrets, result, proofs),
    }
}

fn verify_offline_in<R: Domain>(
    ring: &R,
    secrets: &ClientSecrets,
    result: &PlainMatrix,
    proofs: &PlainMatrix,
) -> Result<VerificationReport> {
    let result = R::unwrap(result.clone())?;
    let proofs = R::unwrap(proofs.clone())?;
    if proofs.rows() != secrets.blocks.len() {
        return Err(Error::dim(format!(
            "{} proof rows for {} blocks",
            proofs.rows(),
            secrets.blocks.len()
        )));
    }
    // Pad blocks carry one extra zero row that the recombined result lacks;
    // its hash entry multiplies zero and drops out.
    let mut reports = Vec::new();
    let mut offset = 0;
    for (i, block) in secrets.blocks.iter().enumerate() {
        let rows = block.rows.min(result.rows().saturating_sub(offset));
        let part = result.row_slice(offset..offset + rows);
        let mut h = R::unwrap_hash(&block.hash)?.clone();
        h.entries.truncate(rows);
        h.exponents.truncate(rows);
        let bundle = ResultBundle::new(part, proofs.row_slice(i..i + 1))?;
        let report = match (&block.error, secrets.mode) {
            (Some(err), CheckMode::WithError) => ring.verify_with_error(&bundle, &h, err)?,
            _ => verify(ring, &bundle, &h)?,
        };
        reports.push((offset, report));
        offset += rows;
    }
    if offset != result.rows() {
        return Err(Error::dim(format!("result has {} rows, blocks cover {offset}", result.rows())));
    }
    VerificationReport::merge(reports).ok_or_else(|| Error::dim("no blocks"))
}

/// Sends one request and returns the reply; server error frames become
/// [`Error::Remote`].
pub fn call<T: Transport + ?Sized>(transport: &mut T, msg: &Message) -> Result<Message> {
    let reply = Message::decode(&transport.exchange(&msg.encode()?)?)?;
    match reply {
        Message::Error { code, message } => Err(Error::Remote { code: code.0, message }),
        other => Ok(other),
    }
}

fn unexpected(got: &Message) -> Error {
    Error::protocol(0, format!("unexpected {:?} reply", got.msg_type()))
}

/// Runs the upload/compute exchange for already protected operands and
/// returns the encrypted block results.
pub fn submit<T: Transport + ?Sized>(protected: &Protected, b: &OperandB, transport: &mut T) -> Result<Vec<CipherMatrix>> {
    let secrets = &protected.secrets;
    let session = match call(
        transport,
        &Message::SessionInit {
            backend: secrets.backend,
            params: secrets.params,
        },
    )? {
        Message::InitAck { session, .. } => session,
        other => return Err(unexpected(&other)),
    };
    let mut next_handle = 1u32;
    let mut upload = |transport: &mut T, operand: OperandBlob| -> Result<u32> {
        let handle = next_handle;
        next_handle += 1;
        match call(
            transport,
            &Message::UploadOperand {
                session,
                handle,
                operand,
            },
        )? {
            Message::OperandAck { handle: h, .. } if h == handle => Ok(handle),
            other => Err(unexpected(&other)),
        }
    };

    let rhs = match (b, &protected.rhs) {
        (OperandB::Secret(_), Some(ct)) => OperandRef::Handle(upload(transport, OperandBlob::Cipher(ct.clone()))?),
        (OperandB::Public(p), _) => OperandRef::Handle(upload(transport, OperandBlob::Plain(p.clone()))?),
        (OperandB::Resident(name), _) => OperandRef::Resident(name.clone()),
        (OperandB::Secret(_), None) => return Err(Error::ModeMismatch("secret B was not encrypted".into())),
    };

    let mut results = Vec::with_capacity(protected.blocks.len());
    for ct in &protected.blocks {
        let lhs = upload(transport, OperandBlob::Cipher(ct.clone()))?;
        match call(
            transport,
            &Message::ComputeRequest {
                session,
                lhs,
                rhs: rhs.clone(),
            },
        )? {
            Message::Result { ciphertext, .. } => results.push(ciphertext),
            other => return Err(unexpected(&other)),
        }
    }
    Ok(results)
}

/// Full client pipeline. A failed verification yields
/// [`Error::IntegrityViolation`] carrying the outcome and its report.
pub fn client_execute<T: Transport + ?Sized>(
    task: &TaskSpec,
    registry: &BackendRegistry,
    transport: &mut T,
) -> Result<Outcome> {
    let protected = protect(task, registry)?;
    let results = submit(&protected, &task.b, transport)?;
    let outcome = finish(&protected.secrets, &results, registry)?;
    if outcome.report.passed() {
        Ok(outcome)
    } else {
        Err(Error::IntegrityViolation(Box::new(outcome)))
    }
}
