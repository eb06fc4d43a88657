//! Typed message payloads. All integers are big-endian; ciphertexts are
//! embedded in their own serialization (`VFC1` header, little-endian
//! scalars).
//!
//! ```text
//! SessionInit     backend u8 | mode u8 | t or scale-bits u64 | slots u32
//! InitAck         session u64 | <SessionInit body>
//! UploadOperand   session u64 | handle u32 | kind u8 | body
//!                   kind 0x00: ciphertext blob
//!                   kind 0x01: plain matrix, elem u8 | rows u32 | cols u32 | entries u64
//! OperandAck      session u64 | handle u32
//! ComputeRequest  session u64 | op u8 (0x01 matmul) | lhs u32 | rhs
//!                   rhs 0x00 handle u32 | 0x01 name-len u16 name
//! Result          session u64 | ciphertext blob
//! Error           code u16 | len u16 | utf-8 message
//! ```

use serde::{Deserialize, Serialize};

use crate::backend::{BackendId, CipherMatrix, PlainMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::params::{Mode, PlainParams};

use super::frame::{self, Frame, MsgType, HEADER_LEN};

pub const OP_MATMUL: u8 = 0x01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ErrorCode(pub u16);

impl ErrorCode {
    pub const PROTOCOL: ErrorCode = ErrorCode(1);
    pub const UNKNOWN_SESSION: ErrorCode = ErrorCode(2);
    pub const UNKNOWN_HANDLE: ErrorCode = ErrorCode(3);
    pub const DIMENSION: ErrorCode = ErrorCode(4);
    pub const OVERSIZE: ErrorCode = ErrorCode(5);
    pub const BACKEND: ErrorCode = ErrorCode(6);
    pub const UNSUPPORTED: ErrorCode = ErrorCode(7);
}

#[derive(Clone, Debug, PartialEq)]
pub enum OperandBlob {
    Cipher(CipherMatrix),
    Plain(PlainMatrix),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperandRef {
    Handle(u32),
    Resident(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Ping,
    SessionInit {
        backend: BackendId,
        params: PlainParams,
    },
    InitAck {
        session: u64,
        backend: BackendId,
        params: PlainParams,
    },
    UploadOperand {
        session: u64,
        handle: u32,
        operand: OperandBlob,
    },
    OperandAck {
        session: u64,
        handle: u32,
    },
    ComputeRequest {
        session: u64,
        lhs: u32,
        rhs: OperandRef,
    },
    Result {
        session: u64,
        ciphertext: CipherMatrix,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::Ping => MsgType::Ping,
            Message::SessionInit { .. } => MsgType::SessionInit,
            Message::InitAck { .. } => MsgType::InitAck,
            Message::UploadOperand { .. } => MsgType::UploadOperand,
            Message::OperandAck { .. } => MsgType::OperandAck,
            Message::ComputeRequest { .. } => MsgType::ComputeRequest,
            Message::Result { .. } => MsgType::Result,
            Message::Error { .. } => MsgType::Error,
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Message::Error {
            code,
            message: message.into(),
        }
    }

    pub fn to_frame(&self) -> Frame {
        let mut w = Vec::new();
        match self {
            Message::Ping => {}
            Message::SessionInit { backend, params } => put_params(&mut w, *backend, params),
            Message::InitAck {
                session,
                backend,
                params,
            } => {
                w.extend_from_slice(&session.to_be_bytes());
                put_params(&mut w, *backend, params);
            }
            Message::UploadOperand {
                session,
                handle,
                operand,
            } => {
                w.extend_from_slice(&session.to_be_bytes());
                w.extend_from_slice(&handle.to_be_bytes());
                match operand {
                    OperandBlob::Cipher(ct) => {
                        w.push(0x00);
                        w.extend_from_slice(&ct.to_bytes());
                    }
                    OperandBlob::Plain(p) => {
                        w.push(0x01);
                        put_plain(&mut w, p);
                    }
                }
            }
            Message::OperandAck { session, handle } => {
                w.extend_from_slice(&session.to_be_bytes());
                w.extend_from_slice(&handle.to_be_bytes());
            }
            Message::ComputeRequest { session, lhs, rhs } => {
                w.extend_from_slice(&session.to_be_bytes());
                w.push(OP_MATMUL);
                w.extend_from_slice(&lhs.to_be_bytes());
                match rhs {
                    OperandRef::Handle(h) => {
                        w.push(0x00);
                        w.extend_from_slice(&h.to_be_bytes());
                    }
                    OperandRef::Resident(name) => {
                        w.push(0x01);
                        put_str(&mut w, name);
                    }
                }
            }
            Message::Result {
                session,
                ciphertext,
            } => {
                w.extend_from_slice(&session.to_be_bytes());
                w.extend_from_slice(&ciphertext.to_bytes());
            }
            Message::Error { code, message } => {
                w.extend_from_slice(&code.0.to_be_bytes());
                put_str(&mut w, message);
            }
        }
        Frame::new(self.msg_type(), w)
    }

    pub fn from_frame(frame: &Frame) -> Result<Self> {
        let mut r = Reader {
            buf: &frame.payload,
            pos: 0,
        };
        let msg = match frame.msg_type {
            MsgType::Ping => Message::Ping,
            MsgType::SessionInit => {
                let (backend, params) = r.params()?;
                Message::SessionInit { backend, params }
            }
            MsgType::InitAck => {
                let session = r.u64()?;
                let (backend, params) = r.params()?;
                Message::InitAck {
                    session,
                    backend,
                    params,
                }
            }
            MsgType::UploadOperand => {
                let session = r.u64()?;
                let handle = r.u32()?;
                let operand = match r.u8()? {
                    0x00 => OperandBlob::Cipher(r.cipher()?),
                    0x01 => OperandBlob::Plain(r.plain()?),
                    k => return Err(r.err(1, format!("unknown operand kind {k:#04x}"))),
                };
                Message::UploadOperand {
                    session,
                    handle,
                    operand,
                }
            }
            MsgType::OperandAck => Message::OperandAck {
                session: r.u64()?,
                handle: r.u32()?,
            },
            MsgType::ComputeRequest => {
                let session = r.u64()?;
                let op = r.u8()?;
                if op != OP_MATMUL {
                    return Err(r.err(1, format!("unknown operation {op:#04x}")));
                }
                let lhs = r.u32()?;
                let rhs = match r.u8()? {
                    0x00 => OperandRef::Handle(r.u32()?),
                    0x01 => OperandRef::Resident(r.string()?),
                    k => return Err(r.err(1, format!("unknown operand reference {k:#04x}"))),
                };
                Message::ComputeRequest { session, lhs, rhs }
            }
            MsgType::Result => Message::Result {
                session: r.u64()?,
                ciphertext: r.cipher()?,
            },
            MsgType::Error => Message::Error {
                code: ErrorCode(r.u16()?),
                message: r.string()?,
            },
        };
        if r.pos != r.buf.len() {
            return Err(r.err(0, "trailing bytes in payload"));
        }
        Ok(msg)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        frame::encode_frame(&self.to_frame())
    }

    /// Decodes exactly one framed message.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        Message::from_frame(&frame::decode_exact(bytes)?)
    }
}

fn put_params(w: &mut Vec<u8>, backend: BackendId, params: &PlainParams) {
    w.push(backend.0);
    match params.mode {
        Mode::Exact { t } => {
            w.push(0x00);
            w.extend_from_slice(&t.to_be_bytes());
        }
        Mode::Approximate { scale } => {
            w.push(0x01);
            w.extend_from_slice(&scale.to_bits().to_be_bytes());
        }
    }
    w.extend_from_slice(&params.slot_count.to_be_bytes());
}

fn put_plain(w: &mut Vec<u8>, p: &PlainMatrix) {
    let (elem, rows, cols) = match p {
        PlainMatrix::Int(m) => (0x00u8, m.rows(), m.cols()),
        PlainMatrix::Real(m) => (0x01u8, m.rows(), m.cols()),
    };
    w.push(elem);
    w.extend_from_slice(&(rows as u32).to_be_bytes());
    w.extend_from_slice(&(cols as u32).to_be_bytes());
    match p {
        PlainMatrix::Int(m) => m.as_slice().iter().for_each(|v| w.extend_from_slice(&v.to_be_bytes())),
        PlainMatrix::Real(m) => m
            .as_slice()
            .iter()
            .for_each(|v| w.extend_from_slice(&v.to_bits().to_be_bytes())),
    }
}

fn put_str(w: &mut Vec<u8>, s: &str) {
    // Longer strings are truncated at a character boundary.
    let mut end = s.len().min(u16::MAX as usize);
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    w.extend_from_slice(&(end as u16).to_be_bytes());
    w.extend_from_slice(&s.as_bytes()[..end]);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    /// Error positioned relative to the frame start, `back` bytes before the
    /// cursor.
    fn err(&self, back: usize, reason: impl Into<String>) -> Error {
        Error::protocol(HEADER_LEN + self.pos - back, reason)
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(0, format!("payload ends early, {n} bytes expected")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?.to_vec();
        String::from_utf8(bytes).map_err(|_| self.err(len, "string is not utf-8"))
    }

    fn params(&mut self) -> Result<(BackendId, PlainParams)> {
        let backend = BackendId(self.u8()?);
        let mode = match self.u8()? {
            0x00 => Mode::Exact { t: self.u64()? },
            0x01 => Mode::Approximate {
                scale: f64::from_bits(self.u64()?),
            },
            m => return Err(self.err(1, format!("unknown mode {m:#04x}"))),
        };
        let params = PlainParams {
            mode,
            slot_count: self.u32()?,
        };
        params.validate().map_err(|e| self.err(12, e.to_string()))?;
        Ok((backend, params))
    }

    fn cipher(&mut self) -> Result<CipherMatrix> {
        let start = self.pos;
        match CipherMatrix::read(&self.buf[start..]) {
            Ok((ct, used)) => {
                self.pos += used;
                Ok(ct)
            }
            Err(Error::Protocol { offset, reason }) => Err(Error::protocol(
                HEADER_LEN + start + offset,
                format!("ciphertext: {reason}"),
            )),
            Err(Error::IncompleteFrame { needed }) => {
                Err(self.err(0, format!("ciphertext truncated by {needed} bytes")))
            }
            Err(e) => Err(self.err(0, e.to_string())),
        }
    }

    fn plain(&mut self) -> Result<PlainMatrix> {
        let elem = self.u8()?;
        if elem > 0x01 {
            return Err(self.err(1, format!("unknown element type {elem:#04x}")));
        }
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let count = rows
            .checked_mul(cols)
            .filter(|c| c.checked_mul(8).is_some_and(|b| b <= self.buf.len() - self.pos))
            .ok_or_else(|| self.err(0, format!("{rows}x{cols} matrix does not fit the payload")))?;
        let raw: Vec<u64> = self
            .take(count * 8)?
            .chunks_exact(8)
            .map(|c| u64::from_be_bytes(c.try_into().unwrap()))
            .collect();
        if elem == 0x00 {
            Ok(PlainMatrix::Int(Matrix::new(rows, cols, raw)?))
        } else {
            Ok(PlainMatrix::Real(Matrix::new(
                rows,
                cols,
                raw.into_iter().map(f64::from_bits).collect(),
            )?))
        }
    }
}
