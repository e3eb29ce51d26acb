//! Site service loop. A site answers queries from its private shard and only
//! ever sends per-feature, per-group or scalar aggregates.

use fedgl_core::kernels::{self, DualSetup, SiteDual};
use fedgl_core::standardize::Standardization;
use fedgl_core::{make_partition, GroupPartition, SiteShard, WeightRule};

use crate::error::{LqmError, Result};
use crate::frame::{decode_frame, encode_frame, LqmFrame, MsgType};
use crate::ops::{codes, Op, Slot};
use crate::transport::Link;

/// Counters returned when a site stops.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SiteStats {
    pub queries: u64,
    pub aggregates: u64,
    pub errors: u64,
}

/// Local state of one site.
pub struct SiteState {
    index: u16,
    shard: SiteShard,
    partition: Option<GroupPartition>,
    x: Vec<f64>,
    residual: Vec<f64>,
    dual: Option<SiteDual>,
}

type OpResult = std::result::Result<Vec<f64>, u16>;

impl SiteState {
    pub fn new(index: u16, shard: SiteShard) -> Self {
        let residual = shard.design().response().iter().map(|y| -y).collect();
        let cols = shard.cols();
        Self {
            index,
            shard,
            partition: None,
            x: vec![0.0; cols],
            residual,
            dual: None,
        }
    }

    pub fn index(&self) -> u16 {
        self.index
    }

    pub fn shard(&self) -> &SiteShard {
        &self.shard
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    fn partition(&self) -> std::result::Result<&GroupPartition, u16> {
        self.partition.as_ref().ok_or(codes::NO_PARTITION)
    }

    fn group_arg(&self, v: Option<&f64>) -> std::result::Result<usize, u16> {
        let g = *v.ok_or(codes::BAD_PAYLOAD)?;
        let p = self.partition()?;
        if g < 0.0 || g.fract() != 0.0 || g as usize >= p.group_count() {
            return Err(codes::BAD_PAYLOAD);
        }
        Ok(g as usize)
    }

    fn expect_len(payload: &[f64], n: usize) -> std::result::Result<(), u16> {
        if payload.len() == n {
            Ok(())
        } else {
            Err(codes::BAD_PAYLOAD)
        }
    }

    /// Computes the reply payload for one query, or an error code.
    pub fn handle(&mut self, op: Op, payload: &[f64]) -> OpResult {
        let cols = self.shard.cols();
        let view = self.shard.view();
        match op {
            Op::SetPartition => {
                let g = *payload.first().ok_or(codes::BAD_PAYLOAD)? as usize;
                Self::expect_len(payload, 1 + 2 * g)?;
                let sizes: Vec<usize> = payload[1..1 + g].iter().map(|&s| s as usize).collect();
                let weights = payload[1 + g..].to_vec();
                let p = make_partition(&sizes, &WeightRule::Explicit(weights)).map_err(|_| codes::BAD_PAYLOAD)?;
                if p.feature_count() != cols {
                    return Err(codes::BAD_PAYLOAD);
                }
                self.partition = Some(p);
                self.x = vec![0.0; cols];
                self.residual = view.response.iter().map(|y| -y).collect();
                self.dual = None;
                Ok(Vec::new())
            }
            Op::Correlation => Ok(kernels::transpose_mul(&view, view.response)),
            Op::Gram => {
                let g = self.group_arg(payload.first())?;
                Ok(kernels::group_gram(&view, self.partition()?.range(g)))
            }
            Op::SetModel => {
                Self::expect_len(payload, cols)?;
                let r = kernels::residual(&view, payload, self.partition()?);
                self.x = payload.to_vec();
                self.residual = r;
                Ok(Vec::new())
            }
            Op::Gradient => {
                let g = self.group_arg(payload.first())?;
                Ok(kernels::group_transpose_mul(&view, self.partition()?.range(g), &self.residual))
            }
            Op::ApplyBlock => {
                let g = self.group_arg(payload.first())?;
                let range = self.partition()?.range(g);
                let updated = &payload[1..];
                Self::expect_len(updated, range.len())?;
                // same subtraction the master performed, so x stays identical
                let delta: Vec<f64> = updated.iter().zip(&self.x[range.clone()]).map(|(n, o)| n - o).collect();
                kernels::add_group_mul(&view, range.clone(), &delta, &mut self.residual);
                self.x[range].copy_from_slice(updated);
                Ok(Vec::new())
            }
            Op::ResidualMoments => Ok(vec![kernels::sq_norm(&self.residual), kernels::dot(&self.residual, view.response)]),
            Op::FullGradient => {
                let p = self.partition()?;
                Self::expect_len(payload, p.group_count())?;
                let include: Vec<bool> = payload.iter().map(|&f| f != 0.0).collect();
                Ok(kernels::transpose_mul_groups(&view, &self.residual, p, &include))
            }
            Op::DualSetup => {
                let p = self.partition()?;
                if payload.len() < 4 + cols {
                    return Err(codes::BAD_PAYLOAD);
                }
                let g_star = self.group_arg(payload.get(3))?;
                let x_prev = &payload[4..4 + cols];
                let corr = &payload[4 + cols..];
                Self::expect_len(corr, p.size(g_star))?;
                let setup = DualSetup {
                    lambda_prev: payload[0],
                    lambda_next: payload[1],
                    at_lambda_max: payload[2] != 0.0,
                    g_star,
                    g_star_correlation: corr.to_vec(),
                };
                let r = kernels::residual(&view, x_prev, p);
                let (dual, partials) = kernels::dual_setup(&view, &r, p, &setup);
                self.dual = Some(dual);
                Ok(partials.to_vec())
            }
            Op::DualProject => {
                Self::expect_len(payload, 1)?;
                let dual = self.dual.as_mut().ok_or(codes::COMPUTE)?;
                Ok(vec![kernels::dual_project(dual, payload[0])])
            }
            Op::ScreenCorrelation => {
                let dual = self.dual.as_ref().ok_or(codes::COMPUTE)?;
                if dual.v2_perp.len() != view.rows {
                    return Err(codes::COMPUTE);
                }
                Ok(kernels::screen_correlation(&view, dual))
            }
            Op::SqNorm => {
                Self::expect_len(payload, 1)?;
                let slot = Slot::from_f64(payload[0]).ok_or(codes::BAD_PAYLOAD)?;
                let v = match (slot, self.dual.as_ref()) {
                    (Slot::Residual, _) => &self.residual,
                    (Slot::Theta, Some(d)) => &d.theta,
                    (Slot::V1, Some(d)) => &d.v1,
                    (Slot::V2, Some(d)) => &d.v2,
                    (Slot::V2Perp, Some(d)) => &d.v2_perp,
                    _ => return Err(codes::COMPUTE),
                };
                Ok(vec![kernels::sq_norm(v)])
            }
            Op::AuditResidual => {
                let fresh = kernels::residual(&view, &self.x, self.partition()?);
                let worst = fresh.iter().zip(&self.residual).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                Ok(vec![worst])
            }
            Op::ColumnMoments => Ok(kernels::column_moments(&view)),
            Op::Standardize => {
                Self::expect_len(payload, 2 * cols + 1)?;
                let s = Standardization {
                    column_means: payload[..cols].to_vec(),
                    column_scales: payload[cols..2 * cols].to_vec(),
                    response_mean: payload[2 * cols],
                };
                s.apply(self.shard.design_mut()).map_err(|_| codes::COMPUTE)?;
                let view = self.shard.view();
                self.residual = match &self.partition {
                    Some(p) => kernels::residual(&view, &self.x, p),
                    None => view.response.iter().map(|y| -y).collect(),
                };
                self.dual = None;
                Ok(Vec::new())
            }
            Op::Evaluate => {
                Self::expect_len(payload, cols)?;
                let p = self.partition()?;
                let r = kernels::residual(&view, payload, p);
                let include = vec![true; p.group_count()];
                let mut out = kernels::transpose_mul_groups(&view, &r, p, &include);
                out.push(kernels::sq_norm(&r));
                out.push(kernels::dot(&r, view.response));
                Ok(out)
            }
            Op::Shutdown | Op::Error => Err(codes::UNKNOWN_OP),
        }
    }
}

fn reply(link: &mut dyn Link, frame: &LqmFrame) -> Result<()> {
    link.send(&encode_frame(frame)?)
}

/// Serves queries until the master sends Shutdown or closes the link.
pub fn run_site(index: u16, shard: SiteShard, mut link: impl Link) -> Result<SiteStats> {
    let mut state = SiteState::new(index, shard);
    let mut stats = SiteStats::default();
    loop {
        let Some(raw) = link.recv(None)? else {
            return Ok(stats);
        };
        let frame = decode_frame(&raw)?;
        match frame.msg_type {
            MsgType::Query => {
                stats.queries += 1;
                let result = match Op::from_u16(frame.op) {
                    Ok(op) => state.handle(op, &frame.payload),
                    Err(_) => Err(codes::UNKNOWN_OP),
                };
                let out = match result {
                    Ok(payload) if payload.iter().all(|v| v.is_finite()) => {
                        LqmFrame::new(MsgType::Partial, frame.request_id, index, frame.op, payload)
                    }
                    other => {
                        stats.errors += 1;
                        let code = other.err().unwrap_or(codes::COMPUTE);
                        LqmFrame::new(MsgType::Control, frame.request_id, index, Op::Error as u16, vec![code as f64, frame.op as f64])
                    }
                };
                reply(&mut link, &out)?;
            }
            MsgType::Aggregate => stats.aggregates += 1,
            MsgType::Control if frame.op == Op::Shutdown as u16 => return Ok(stats),
            MsgType::Control => stats.errors += 1,
            MsgType::Partial => {
                return Err(LqmError::Protocol(format!("site {index} received a PARTIAL frame")));
            }
        }
    }
}
