//! Ordered, reliable links carrying encoded frames.

use std::io::Write;
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use crate::error::{LqmError, Result};
use crate::frame::read_frame_bytes;

/// One end of a point-to-point link.
pub trait Link: Send {
    fn send(&mut self, bytes: &[u8]) -> Result<()>;

    /// Next encoded frame, waiting at most `timeout` (forever if `None`).
    /// `Ok(None)` when the peer closed the link cleanly.
    fn recv(&mut self, timeout: Option<Duration>) -> Result<Option<Vec<u8>>>;
}

/// FIFO, lossless in-process link.
pub struct ChannelLink {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    peer: u16,
}

/// Two connected channel endpoints: `(master side, site side)`.
pub fn channel_pair(site: u16) -> (ChannelLink, ChannelLink) {
    let (to_site, from_master) = channel();
    let (to_master, from_site) = channel();
    (
        ChannelLink {
            tx: to_site,
            rx: from_site,
            peer: site,
        },
        ChannelLink {
            tx: to_master,
            rx: from_master,
            peer: crate::frame::MASTER,
        },
    )
}

impl Link for ChannelLink {
    fn send(&mut self, bytes: &[u8]) -> Result<()> {
        self.tx.send(bytes.to_vec()).map_err(|_| LqmError::Disconnected(self.peer))
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Option<Vec<u8>>> {
        match timeout {
            None => Ok(self.rx.recv().ok()),
            Some(t) => match self.rx.recv_timeout(t) {
                Ok(b) => Ok(Some(b)),
                Err(RecvTimeoutError::Timeout) => Err(LqmError::Timeout { missing: vec![self.peer] }),
                Err(RecvTimeoutError::Disconnected) => Ok(None),
            },
        }
    }
}

pub struct TcpLink {
    stream: TcpStream,
    peer: u16,
}

impl TcpLink {
    pub fn new(stream: TcpStream, peer: u16) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(Self { stream, peer })
    }
}

impl Link for TcpLink {
    fn send(&mut self, bytes: &[u8]) -> Result<()> {
        self.stream.write_all(bytes).map_err(|e| match e.kind() {
            std::io::ErrorKind::BrokenPipe | std::io::ErrorKind::ConnectionReset => LqmError::Disconnected(self.peer),
            _ => e.into(),
        })
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Option<Vec<u8>>> {
        self.stream.set_read_timeout(timeout.map(|t| t.max(Duration::from_millis(1))))?;
        match read_frame_bytes(&mut self.stream) {
            Err(LqmError::Io(e)) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                Err(LqmError::Timeout { missing: vec![self.peer] })
            }
            Err(LqmError::Io(e)) if e.kind() == std::io::ErrorKind::ConnectionReset => Ok(None),
            other => other,
        }
    }
}

/// Test-only fault injection: silently drops outgoing frames after a number
/// of successful sends and can delay every send.
pub struct FaultyLink<L: Link> {
    inner: L,
    drop_after: Option<usize>,
    delay: Duration,
    sent: usize,
}

impl<L: Link> FaultyLink<L> {
    pub fn new(inner: L, drop_after: Option<usize>, delay: Duration) -> Self {
        Self {
            inner,
            drop_after,
            delay,
            sent: 0,
        }
    }
}

impl<L: Link> Link for FaultyLink<L> {
    fn send(&mut self, bytes: &[u8]) -> Result<()> {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        self.sent += 1;
        match self.drop_after {
            Some(n) if self.sent > n => Ok(()),
            _ => self.inner.send(bytes),
        }
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Option<Vec<u8>>> {
        self.inner.recv(timeout)
    }
}
