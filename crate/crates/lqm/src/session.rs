//! Master side of the aggregation protocol.

use std::time::{Duration, Instant};

use fedgl_core::kernels::sum_ascending;

use crate::error::{LqmError, Result};
use crate::frame::{decode_frame, encode_frame, LqmFrame, MsgType, MASTER};
use crate::ops::{codes, Op};
use crate::transport::Link;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    InProcess,
    Tcp,
}

impl TransportKind {
    pub fn name(self) -> &'static str {
        match self {
            TransportKind::InProcess => "in_process",
            TransportKind::Tcp => "tcp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionTopology {
    pub site_count: usize,
    pub transport: TransportKind,
}

/// Every frame crossing the master's links, in the order the master sent or
/// received it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub frames: Vec<Vec<u8>>,
}

impl Transcript {
    /// Concatenated raw frames.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.frames.concat()
    }

    /// Splits a concatenated dump back into frames.
    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let mut frames = Vec::new();
        while let Some(raw) = crate::frame::read_frame_bytes(&mut bytes)? {
            frames.push(raw);
        }
        Ok(Self { frames })
    }

    pub fn decoded(&self) -> Result<Vec<LqmFrame>> {
        self.frames.iter().map(|f| decode_frame(f)).collect()
    }
}

/// One master talking to `m` sites over a star of links, one link per site in
/// ascending site order.
pub struct Session {
    links: Vec<Box<dyn Link>>,
    transport: TransportKind,
    next_id: u64,
    timeout: Duration,
    tap: Option<Transcript>,
    poisoned: bool,
}

impl Session {
    pub fn new(links: Vec<Box<dyn Link>>, transport: TransportKind) -> Self {
        Self {
            links,
            transport,
            next_id: 1,
            timeout: DEFAULT_TIMEOUT,
            tap: None,
            poisoned: false,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn topology(&self) -> SessionTopology {
        SessionTopology {
            site_count: self.links.len(),
            transport: self.transport,
        }
    }

    pub fn site_count(&self) -> usize {
        self.links.len()
    }

    /// Starts recording a transcript, discarding any previous one.
    pub fn start_tap(&mut self) {
        self.tap = Some(Transcript::default());
    }

    pub fn take_tap(&mut self) -> Option<Transcript> {
        self.tap.take()
    }

    fn send(&mut self, site: usize, frame: &LqmFrame) -> Result<()> {
        let bytes = encode_frame(frame)?;
        if let Some(t) = self.tap.as_mut() {
            t.frames.push(bytes.clone());
        }
        self.links[site].send(&bytes)
    }

    fn check_live(&self) -> Result<()> {
        if self.poisoned {
            return Err(LqmError::Protocol("session aborted by an earlier failure".into()));
        }
        Ok(())
    }

    /// Sends one QUERY to every site and collects their PARTIAL payloads in
    /// site order. Returns the request id alongside.
    pub fn query(&mut self, op: Op, payload: &[f64]) -> Result<(u64, Vec<Vec<f64>>)> {
        self.check_live()?;
        let id = self.next_id;
        self.next_id += 1;
        let frame = LqmFrame::new(MsgType::Query, id, MASTER, op as u16, payload.to_vec());
        for s in 0..self.links.len() {
            if let Err(e) = self.send(s, &frame) {
                self.poisoned = true;
                return Err(e);
            }
        }
        match self.collect(id, op) {
            Ok(p) => Ok((id, p)),
            Err(e) => {
                self.poisoned = true;
                Err(e)
            }
        }
    }

    fn collect(&mut self, id: u64, op: Op) -> Result<Vec<Vec<f64>>> {
        let deadline = Instant::now() + self.timeout;
        let mut partials = Vec::with_capacity(self.links.len());
        let mut missing = Vec::new();
        let mut remote = None;
        for s in 0..self.links.len() {
            let wait = deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(1));
            let raw = match self.links[s].recv(Some(wait)) {
                Ok(Some(raw)) => raw,
                Ok(None) => return Err(LqmError::Disconnected(s as u16)),
                Err(LqmError::Timeout { .. }) => {
                    missing.push(s as u16);
                    continue;
                }
                Err(e) => return Err(e),
            };
            if let Some(t) = self.tap.as_mut() {
                t.frames.push(raw.clone());
            }
            let frame = decode_frame(&raw)?;
            if frame.request_id != id || frame.site != s as u16 {
                return Err(LqmError::Protocol(format!(
                    "expected reply to request {id} from site {s}, got request {} from site {}",
                    frame.request_id, frame.site
                )));
            }
            match frame.msg_type {
                MsgType::Partial if frame.op == op as u16 => partials.push(frame.payload),
                MsgType::Control if frame.op == Op::Error as u16 => {
                    let code = frame.payload.first().copied().unwrap_or(0.0) as u16;
                    remote.get_or_insert(LqmError::Remote {
                        site: s as u16,
                        op: op as u16,
                        code,
                    });
                }
                other => {
                    return Err(LqmError::Protocol(format!("unexpected {other:?} frame with op {} from site {s}", frame.op)));
                }
            }
        }
        if !missing.is_empty() {
            return Err(LqmError::Timeout { missing });
        }
        if let Some(e) = remote {
            return Err(e);
        }
        Ok(partials)
    }

    /// Query expecting empty acknowledgements.
    pub fn command(&mut self, op: Op, payload: &[f64]) -> Result<()> {
        let (id, partials) = self.query(op, payload)?;
        if let Some(s) = partials.iter().position(|p| !p.is_empty()) {
            self.poisoned = true;
            return Err(LqmError::Protocol(format!("site {s} sent a payload for acknowledgement {id}")));
        }
        Ok(())
    }

    /// Queries every site, sums the partials in ascending site order and
    /// broadcasts the sum as an AGGREGATE frame with the same request id.
    pub fn sum(&mut self, op: Op, payload: &[f64]) -> Result<Vec<f64>> {
        let (id, partials) = self.query(op, payload)?;
        let total = match sum_ascending(&partials) {
            Ok(t) => t,
            Err(_) => {
                let lens: Vec<usize> = partials.iter().map(Vec::len).collect();
                let notice = LqmFrame::new(MsgType::Control, id, MASTER, Op::Error as u16, vec![codes::LENGTH_MISMATCH as f64]);
                for s in 0..self.links.len() {
                    let _ = self.send(s, &notice);
                }
                self.poisoned = true;
                return Err(LqmError::Protocol(format!("partial lengths differ across sites: {lens:?}")));
            }
        };
        let frame = LqmFrame::new(MsgType::Aggregate, id, MASTER, op as u16, total.clone());
        for s in 0..self.links.len() {
            if let Err(e) = self.send(s, &frame) {
                self.poisoned = true;
                return Err(e);
            }
        }
        Ok(total)
    }

    /// Asks every site to stop. Errors on individual links are ignored.
    pub fn shutdown(&mut self) {
        let id = self.next_id;
        self.next_id += 1;
        let frame = LqmFrame::new(MsgType::Control, id, MASTER, Op::Shutdown as u16, Vec::new());
        for s in 0..self.links.len() {
            let _ = self.send(s, &frame);
        }
    }
}
