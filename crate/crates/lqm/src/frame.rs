//! Wire frames.
//!
//! ```text
//! "LQM1" | msg_type u8 | request_id u64 | site u16 | op u16 | payload_len u32 | payload f64 * payload_len
//! ```
//!
//! All integers and doubles are little-endian; the header is 21 bytes.

use std::io::Read;

use crate::error::{LqmError, Result};

pub const MAGIC: [u8; 4] = *b"LQM1";
pub const HEADER_LEN: usize = 21;
/// Site field value used by the master.
pub const MASTER: u16 = 0xFFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Query = 1,
    Partial = 2,
    Aggregate = 3,
    Control = 4,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            1 => Ok(MsgType::Query),
            2 => Ok(MsgType::Partial),
            3 => Ok(MsgType::Aggregate),
            4 => Ok(MsgType::Control),
            other => Err(LqmError::UnknownMsgType(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqmFrame {
    pub msg_type: MsgType,
    pub request_id: u64,
    pub site: u16,
    pub op: u16,
    pub payload: Vec<f64>,
}

impl LqmFrame {
    pub fn new(msg_type: MsgType, request_id: u64, site: u16, op: u16, payload: Vec<f64>) -> Self {
        Self {
            msg_type,
            request_id,
            site,
            op,
            payload,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 8 * self.payload.len()
    }
}

pub fn encode_frame(frame: &LqmFrame) -> Result<Vec<u8>> {
    if frame.payload.iter().any(|v| !v.is_finite()) {
        return Err(LqmError::NonFinite);
    }
    let len = u32::try_from(frame.payload.len()).map_err(|_| LqmError::Protocol("payload too long".into()))?;
    let mut out = Vec::with_capacity(frame.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.push(frame.msg_type as u8);
    out.extend_from_slice(&frame.request_id.to_le_bytes());
    out.extend_from_slice(&frame.site.to_le_bytes());
    out.extend_from_slice(&frame.op.to_le_bytes());
    out.extend_from_slice(&len.to_le_bytes());
    for v in &frame.payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Header fields plus the declared payload length.
fn decode_header(bytes: &[u8]) -> Result<(MsgType, u64, u16, u16, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(LqmError::Truncated {
            needed: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(LqmError::BadMagic(magic));
    }
    let msg_type = MsgType::from_u8(bytes[4])?;
    let request_id = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
    let site = u16::from_le_bytes(bytes[13..15].try_into().unwrap());
    let op = u16::from_le_bytes(bytes[15..17].try_into().unwrap());
    let len = u32::from_le_bytes(bytes[17..21].try_into().unwrap()) as usize;
    Ok((msg_type, request_id, site, op, len))
}

pub fn decode_frame(bytes: &[u8]) -> Result<LqmFrame> {
    let (msg_type, request_id, site, op, len) = decode_header(bytes)?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * len {
        if body.len() < 8 * len {
            return Err(LqmError::Truncated {
                needed: HEADER_LEN + 8 * len,
                got: bytes.len(),
            });
        }
        return Err(LqmError::LengthMismatch {
            declared: len,
            actual: body.len(),
        });
    }
    let payload = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(LqmFrame {
        msg_type,
        request_id,
        site,
        op,
        payload,
    })
}

/// Reads exactly one encoded frame from a byte stream. `Ok(None)` on a clean
/// end of stream before any header byte.
pub fn read_frame_bytes<R: Read>(reader: &mut R) -> Result<Option<Vec<u8>>> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => {
                return Err(LqmError::Truncated {
                    needed: HEADER_LEN,
                    got: filled,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let (_, _, _, _, len) = decode_header(&header)?;
    let mut bytes = header.to_vec();
    bytes.resize(HEADER_LEN + 8 * len, 0);
    reader.read_exact(&mut bytes[HEADER_LEN..]).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => LqmError::Truncated {
            needed: HEADER_LEN + 8 * len,
            got: HEADER_LEN,
        },
        _ => e.into(),
    })?;
    Ok(Some(bytes))
}
