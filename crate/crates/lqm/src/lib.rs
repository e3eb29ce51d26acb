//! The Local Query Model: a master sums per-site partial results computed on
//! private row shards, and the distributed group Lasso solvers built on it.
//!
//! Only per-feature, per-group and scalar aggregates ever leave a site.

pub mod cluster;
pub mod dist;
pub mod error;
pub mod frame;
pub mod ops;
pub mod session;
pub mod site;
pub mod transport;

pub use cluster::{connect_tcp, join_sites, serve_tcp_once, spawn_in_process, spawn_tcp_local};
pub use dist::{dbcd_solve, ddpp_gl_path, dsr_mask, run_master, DbcdAbort, DistributedEngine, MasterPlan};
pub use error::{LqmError, Result};
pub use frame::{decode_frame, encode_frame, LqmFrame, MsgType, HEADER_LEN, MASTER};
pub use ops::{Op, Slot};
pub use session::{Session, SessionTopology, Transcript, TransportKind, DEFAULT_TIMEOUT};
pub use site::{run_site, SiteState, SiteStats};
pub use transport::{channel_pair, ChannelLink, FaultyLink, Link, TcpLink};

/// Sums equal-length partials in ascending site order.
pub fn lqm_sum(partials: &[Vec<f64>]) -> Result<Vec<f64>> {
    fedgl_core::kernels::sum_ascending(partials).map_err(|_| LqmError::Protocol("partial lengths differ across sites".into()))
}
