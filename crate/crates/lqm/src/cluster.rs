//! Helpers that wire a master session to site services.

use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use fedgl_core::SiteShard;

use crate::error::{LqmError, Result};
use crate::frame::MASTER;
use crate::session::{Session, TransportKind};
use crate::site::{run_site, SiteStats};
use crate::transport::{channel_pair, Link, TcpLink};

pub type SiteHandle = JoinHandle<Result<SiteStats>>;

/// Sites on threads, linked by in-process channels.
pub fn spawn_in_process(shards: Vec<SiteShard>) -> (Session, Vec<SiteHandle>) {
    let mut links: Vec<Box<dyn Link>> = Vec::new();
    let mut handles = Vec::new();
    for (i, shard) in shards.into_iter().enumerate() {
        let (master, site) = channel_pair(i as u16);
        links.push(Box::new(master));
        handles.push(std::thread::spawn(move || run_site(i as u16, shard, site)));
    }
    (Session::new(links, TransportKind::InProcess), handles)
}

/// Sites on threads, each listening on an ephemeral loopback port.
pub fn spawn_tcp_local(shards: Vec<SiteShard>) -> Result<(Session, Vec<SiteHandle>)> {
    let mut addrs = Vec::new();
    let mut handles = Vec::new();
    for (i, shard) in shards.into_iter().enumerate() {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        addrs.push(listener.local_addr()?);
        handles.push(std::thread::spawn(move || serve_tcp_once(listener, i as u16, shard)));
    }
    let session = connect_tcp(&addrs, Duration::from_secs(5))?;
    Ok((session, handles))
}

/// Accepts one master connection and serves it.
pub fn serve_tcp_once(listener: TcpListener, index: u16, shard: SiteShard) -> Result<SiteStats> {
    let (stream, _) = listener.accept()?;
    run_site(index, shard, TcpLink::new(stream, MASTER)?)
}

/// Connects to sites in the given order (site `i` is `addrs[i]`), retrying
/// each for up to `wait`.
pub fn connect_tcp<A: ToSocketAddrs>(addrs: &[A], wait: Duration) -> Result<Session> {
    let mut links: Vec<Box<dyn Link>> = Vec::new();
    for (i, a) in addrs.iter().enumerate() {
        let deadline = Instant::now() + wait;
        let stream = loop {
            match TcpStream::connect(a) {
                Ok(s) => break s,
                Err(e) if Instant::now() >= deadline => return Err(e.into()),
                Err(_) => std::thread::sleep(Duration::from_millis(50)),
            }
        };
        links.push(Box::new(TcpLink::new(stream, i as u16)?));
    }
    Ok(Session::new(links, TransportKind::Tcp))
}

/// Joins site threads, returning the first error.
pub fn join_sites(handles: Vec<SiteHandle>) -> Result<Vec<SiteStats>> {
    handles
        .into_iter()
        .map(|h| h.join().map_err(|_| LqmError::Protocol("site thread panicked".into()))?)
        .collect()
}
