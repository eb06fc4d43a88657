use std::io;

use thiserror::Error;

use crate::protocol::client::Outcome;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),

    #[error("invalid error config: {0}")]
    InvalidErrorConfig(String),

    #[error("cannot split a {rows}x{cols} matrix into non-square blocks")]
    CannotSplit { rows: usize, cols: usize },

    #[error("entry {value} at ({row}, {col}) is outside [0, {modulus})")]
    OutOfDomain {
        row: usize,
        col: usize,
        value: u64,
        modulus: u64,
    },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("parameter mismatch: {0}")]
    ParamsMismatch(String),

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("ciphertext does not belong to this key")]
    Authentication,

    #[error("backend error: {0}")]
    Backend(String),

    #[error("protocol error at offset {offset}: {reason}")]
    Protocol { offset: usize, reason: String },

    #[error("incomplete frame: need {needed} more bytes")]
    IncompleteFrame { needed: usize },

    #[error("server error {code}: {message}")]
    Remote { code: u16, message: String },

    #[error("channel error: {0}")]
    Channel(#[from] io::Error),

    #[error("invalid tamper spec: {0}")]
    TamperSpec(String),

    #[error("invalid config: {0}")]
    Config(String),

    /// The computation completed but its result failed verification.
    #[error("integrity violation: {} of the proof columns disagree", .0.report.mismatch_count)]
    IntegrityViolation(Box<Outcome>),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::InvalidDimension(msg.into())
    }

    pub(crate) fn protocol(offset: usize, reason: impl Into<String>) -> Self {
        Error::Protocol {
            offset,
            reason: reason.into(),
        }
    }
}
