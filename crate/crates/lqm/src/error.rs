use thiserror::Error;

#[derive(Debug, Error)]
pub enum LqmError {
    #[error("bad frame magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("frame truncated: needed {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("payload length field says {declared} values but {actual} bytes follow the header")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("unknown message type {0}")]
    UnknownMsgType(u8),
    #[error("unknown op code {0}")]
    UnknownOp(u16),
    #[error("payload holds a non-finite value")]
    NonFinite,
    #[error("timed out waiting for sites {missing:?}")]
    Timeout { missing: Vec<u16> },
    #[error("link to site {0} closed")]
    Disconnected(u16),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("site {site} reported error code {code} for op {op}")]
    Remote { site: u16, op: u16, code: u16 },
    #[error(transparent)]
    Core(#[from] fedgl_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LqmError>;
