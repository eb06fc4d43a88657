//! Frame layout (header integers big-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "VFHE"
//! 4       1     version (1)
//! 5       1     message type
//! 6       4     payload length
//! 10      n     payload
//! ```

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VFHE";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Ping = 0x00,
    SessionInit = 0x01,
    InitAck = 0x02,
    UploadOperand = 0x03,
    OperandAck = 0x04,
    ComputeRequest = 0x05,
    Result = 0x06,
    Error = 0x7F,
}

impl TryFrom<u8> for MsgType {
    type Error = u8;

    fn try_from(b: u8) -> std::result::Result<Self, u8> {
        Ok(match b {
            0x00 => MsgType::Ping,
            0x01 => MsgType::SessionInit,
            0x02 => MsgType::InitAck,
            0x03 => MsgType::UploadOperand,
            0x04 => MsgType::OperandAck,
            0x05 => MsgType::ComputeRequest,
            0x06 => MsgType::Result,
            0x7F => MsgType::Error,
            other => return Err(other),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Frame { msg_type, payload }
    }
}

pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>> {
    let len = u32::try_from(frame.payload.len())
        .map_err(|_| Error::protocol(6, "payload exceeds 2^32 - 1 bytes"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + frame.payload.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(frame.msg_type as u8);
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&frame.payload);
    Ok(out)
}

/// Validates a frame header, returning the message type and payload length.
pub fn decode_header(header: &[u8]) -> Result<(MsgType, usize)> {
    for (i, (&got, &want)) in header.iter().zip(MAGIC).enumerate() {
        if got != want {
            return Err(Error::protocol(i, format!("bad magic byte {got:#04x}")));
        }
    }
    if header.len() < HEADER_LEN {
        return Err(Error::IncompleteFrame {
            needed: HEADER_LEN - header.len(),
        });
    }
    if header[4] != VERSION {
        return Err(Error::protocol(4, format!("unsupported version {}", header[4])));
    }
    let msg_type = MsgType::try_from(header[5])
        .map_err(|b| Error::protocol(5, format!("unknown message type {b:#04x}")))?;
    let len = u32::from_be_bytes(header[6..10].try_into().unwrap()) as usize;
    Ok((msg_type, len))
}

/// Decodes one frame from the front of `bytes`, returning it together with
/// the number of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(Frame, usize)> {
    let (msg_type, len) = decode_header(bytes)?;
    let available = bytes.len() - HEADER_LEN;
    if available < len {
        return Err(Error::IncompleteFrame {
            needed: len - available,
        });
    }
    Ok((
        Frame {
            msg_type,
            payload: bytes[HEADER_LEN..HEADER_LEN + len].to_vec(),
        },
        HEADER_LEN + len,
    ))
}

/// Decodes exactly one frame; trailing bytes are an error.
pub fn decode_exact(bytes: &[u8]) -> Result<Frame> {
    let (frame, used) = decode_frame(bytes)?;
    if used != bytes.len() {
        return Err(Error::protocol(used, "trailing bytes after frame"));
    }
    Ok(frame)
}

/// Reads one whole frame from a blocking stream; `max_payload` bounds the
/// allocation made on the strength of the header.
pub fn read_frame<R: std::io::Read>(r: &mut R, max_payload: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; HEADER_LEN];
    r.read_exact(&mut buf)?;
    let (_, len) = decode_header(&buf)?;
    if len > max_payload {
        return Err(Error::protocol(6, format!("payload of {len} bytes exceeds limit {max_payload}")));
    }
    buf.resize(HEADER_LEN + len, 0);
    r.read_exact(&mut buf[HEADER_LEN..])?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ping_is_ten_bytes() {
        let bytes = encode_frame(&Frame::new(MsgType::Ping, vec![])).unwrap();
        assert_eq!(bytes, b"VFHE\x01\x00\x00\x00\x00\x00");
        assert_eq!(decode_exact(&bytes).unwrap(), Frame::new(MsgType::Ping, vec![]));
    }

    #[test]
    fn header_is_big_endian() {
        let bytes = encode_frame(&Frame::new(MsgType::Result, vec![7; 0x0102])).unwrap();
        assert_eq!(&bytes[..10], b"VFHE\x01\x06\x00\x00\x01\x02");
    }

    #[test]
    fn rejects_bad_magic() {
        let err = decode_frame(b"XFHE\x01\x00\x00\x00\x00\x00").unwrap_err();
        assert!(matches!(err, Error::Protocol { offset: 0, .. }));
    }

    #[test]
    fn reads_from_stream() {
        let bytes = encode_frame(&Frame::new(MsgType::Error, vec![0, 1, 0, 1, b'x'])).unwrap();
        let mut stream = bytes.repeat(2);
        stream.push(9);
        let mut cursor = std::io::Cursor::new(stream);
        assert_eq!(read_frame(&mut cursor, 64).unwrap(), bytes);
        assert_eq!(read_frame(&mut cursor, 64).unwrap(), bytes);
        assert!(matches!(read_frame(&mut cursor, 64), Err(Error::Channel(_))));
        let mut cursor = std::io::Cursor::new(bytes);
        assert!(matches!(read_frame(&mut cursor, 4), Err(Error::Protocol { offset: 6, .. })));
    }

    #[test]
    fn truncated() {
        assert!(matches!(decode_frame(b"VFHE\x01"), Err(Error::IncompleteFrame { needed: 5 })));
        assert!(matches!(
            decode_frame(b"VFHE\x01\x00\x00\x00\x00\x03ab"),
            Err(Error::IncompleteFrame { needed: 1 })
        ));
    }
}
