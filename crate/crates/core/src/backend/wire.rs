//! Ciphertext container:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "VFC1"
//! 4       1     backend id (0x01 exact, 0x02 approximate)
//! 5       1     mode (0x00 exact, 0x01 approximate)
//! 6       8     t (exact) or scale as f64 bits (approximate), little-endian
//! 14      4     rows, little-endian
//! 18      4     cols, little-endian
//! 22      4     payload length, little-endian
//! 26      n     payload
//! ```

use crate::error::{Error, Result};
use crate::params::{Mode, PlainParams, DEFAULT_SLOT_COUNT};

use super::{BackendId, CipherMatrix};

pub const MAGIC: &[u8; 4] = b"VFC1";
pub const HEADER_LEN: usize = 26;

const MODE_EXACT: u8 = 0x00;
const MODE_APPROXIMATE: u8 = 0x01;

impl CipherMatrix {
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.push(self.backend_id.0);
        match self.params.mode {
            Mode::Exact { t } => {
                out.push(MODE_EXACT);
                out.extend_from_slice(&t.to_le_bytes());
            }
            Mode::Approximate { scale } => {
                out.push(MODE_APPROXIMATE);
                out.extend_from_slice(&scale.to_bits().to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses one ciphertext; trailing bytes are an error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (ct, used) = Self::read(bytes)?;
        if used != bytes.len() {
            return Err(Error::protocol(used, "trailing bytes after ciphertext"));
        }
        Ok(ct)
    }

    /// Parses one ciphertext from the front of `bytes`, returning the number
    /// of bytes consumed.
    pub fn read(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < HEADER_LEN {
            if !MAGIC.starts_with(&bytes[..bytes.len().min(4)]) {
                return Err(Error::protocol(0, "bad ciphertext magic"));
            }
            return Err(Error::IncompleteFrame {
                needed: HEADER_LEN - bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::protocol(0, "bad ciphertext magic"));
        }
        let backend_id = BackendId(bytes[4]);
        let param = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
        let mode = match bytes[5] {
            MODE_EXACT => Mode::Exact { t: param },
            MODE_APPROXIMATE => Mode::Approximate {
                scale: f64::from_bits(param),
            },
            other => return Err(Error::protocol(5, format!("unknown ciphertext mode {other:#04x}"))),
        };
        let params = PlainParams {
            mode,
            slot_count: DEFAULT_SLOT_COUNT,
        };
        params
            .validate()
            .map_err(|e| Error::protocol(6, e.to_string()))?;
        let rows = u32::from_le_bytes(bytes[14..18].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[18..22].try_into().unwrap()) as usize;
        let len = u32::from_le_bytes(bytes[22..26].try_into().unwrap()) as usize;
        let available = bytes.len() - HEADER_LEN;
        if available < len {
            return Err(Error::IncompleteFrame {
                needed: len - available,
            });
        }
        Ok((
            CipherMatrix {
                backend_id,
                params,
                rows,
                cols,
                payload: bytes[HEADER_LEN..HEADER_LEN + len].to_vec(),
            },
            HEADER_LEN + len,
        ))
    }
}
