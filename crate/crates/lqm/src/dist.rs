//! Distributed strong rules, dual-projection screening and block coordinate
//! descent, driven from the master over a [`Session`].

use serde::{Deserialize, Serialize};

use fedgl_core::path::{run_path_resumable, PathAbort, PathEngine, PathOptions};
use fedgl_core::screening::{self, check_step, dual_setup_for, edpp_decide, projection_coefficient};
use fedgl_core::standardize::Standardization;
use fedgl_core::{
    bcd_drive, group_lipschitz, make_partition, BcdBackend, Error, GroupPartition, GroupVector, NormBound, PathModels, ScreenMask, ScreenMode,
    ScreenRule, ScreeningContext, Solution, SolveOptions, SolverKind, WeightRule,
};

use crate::error::{LqmError, Result};
use crate::ops::{Op, Slot};
use crate::session::Session;

/// Residual-holding backend whose rows live at the sites.
struct Remote<'a> {
    session: &'a mut Session,
}

impl BcdBackend for Remote<'_> {
    type Error = LqmError;

    fn reset_residual(&mut self, x: &[f64]) -> Result<()> {
        self.session.command(Op::SetModel, x)
    }

    fn group_gradient(&mut self, g: usize) -> Result<Vec<f64>> {
        self.session.sum(Op::Gradient, &[g as f64])
    }

    fn apply_delta(&mut self, g: usize, _delta: &[f64], updated: &[f64]) -> Result<()> {
        let mut payload = Vec::with_capacity(updated.len() + 1);
        payload.push(g as f64);
        payload.extend_from_slice(updated);
        self.session.command(Op::ApplyBlock, &payload)
    }

    fn residual_moments(&mut self) -> Result<[f64; 2]> {
        let m = self.session.sum(Op::ResidualMoments, &[])?;
        moments_pair(&m)
    }

    fn gradient(&mut self, include: &[bool]) -> Result<Vec<f64>> {
        let flags: Vec<f64> = include.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        self.session.sum(Op::FullGradient, &flags)
    }
}

fn moments_pair(m: &[f64]) -> Result<[f64; 2]> {
    match m {
        [a, b] => Ok([*a, *b]),
        _ => Err(LqmError::Protocol(format!("expected 2 moments, got {}", m.len()))),
    }
}

/// Master-side engine over a live session.
pub struct DistributedEngine {
    session: Session,
    partition: GroupPartition,
    pub bound: NormBound,
}

impl DistributedEngine {
    /// Installs the partition at every site and, if `partition` carries no
    /// Lipschitz constants, computes them from aggregated group Grams.
    pub fn new(session: Session, partition: &GroupPartition) -> Result<Self> {
        let mut engine = Self {
            session,
            partition: partition.clone(),
            bound: NormBound::Spectral,
        };
        engine.install_partition()?;
        if engine.partition.lipschitz().is_none() {
            engine.refresh_lipschitz()?;
        }
        Ok(engine)
    }

    fn install_partition(&mut self) -> Result<()> {
        let p = &self.partition;
        let mut payload = vec![p.group_count() as f64];
        payload.extend(p.sizes().iter().map(|&s| s as f64));
        payload.extend_from_slice(p.weights());
        self.session.command(Op::SetPartition, &payload)
    }

    fn refresh_lipschitz(&mut self) -> Result<()> {
        let mut l = Vec::with_capacity(self.partition.group_count());
        for g in 0..self.partition.group_count() {
            let gram = self.session.sum(Op::Gram, &[g as f64])?;
            let v = group_lipschitz(&gram, self.partition.size(g))?;
            if !(v > 0.0) {
                return Err(Error::ZeroGroup(g).into());
            }
            l.push(v);
        }
        self.partition = self.partition.clone().with_lipschitz(l)?;
        Ok(())
    }

    /// Centers and scales every site's shard from aggregated column moments,
    /// then recomputes the Lipschitz constants.
    pub fn standardize(&mut self) -> Result<Standardization> {
        let cols = self.partition.feature_count();
        let moments = self.session.sum(Op::ColumnMoments, &[])?;
        let s = Standardization::from_moments(&moments, cols)?;
        let mut payload = s.column_means.clone();
        payload.extend_from_slice(&s.column_scales);
        payload.push(s.response_mean);
        self.session.command(Op::Standardize, &payload)?;
        self.refresh_lipschitz()?;
        Ok(s)
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn session_mut(&mut self) -> &mut Session {
        &mut self.session
    }

    pub fn into_session(self) -> Session {
        self.session
    }

    /// Largest gap between any site's maintained residual and a fresh
    /// recomputation from the broadcast model.
    pub fn audit_residual(&mut self) -> Result<f64> {
        let (_, partials) = self.session.query(Op::AuditResidual, &[])?;
        Ok(partials.iter().filter_map(|p| p.first().copied()).fold(0.0, f64::max))
    }

    /// Aggregated squared norm of a site-local vector.
    pub fn sq_norm(&mut self, slot: Slot) -> Result<f64> {
        Ok(self.session.sum(Op::SqNorm, &[slot as u8 as f64])?[0])
    }
}

impl PathEngine for DistributedEngine {
    type Error = LqmError;

    fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    fn describe(&self) -> (SolverKind, String) {
        let t = self.session.topology();
        (SolverKind::Dbcd, format!("lqm {} sites over {}", t.site_count, t.transport.name()))
    }

    fn context(&mut self) -> Result<ScreeningContext> {
        let correlation = self.session.sum(Op::Correlation, &[])?;
        let norms = match self.bound {
            NormBound::Spectral => self.partition.lipschitz().ok_or(Error::MissingLipschitz)?.iter().map(|l| l.sqrt()).collect(),
            NormBound::Frobenius => {
                let cols = self.partition.feature_count();
                let m = self.session.sum(Op::ColumnMoments, &[])?;
                self.partition.block_norms(&m[cols..2 * cols].iter().map(|s| s.sqrt()).collect::<Vec<_>>())
            }
        };
        Ok(ScreeningContext::from_parts(correlation, &self.partition, norms)?)
    }

    fn edpp_step(&mut self, ctx: &ScreeningContext, x_prev: &[f64], lambda_prev: f64, lambda_next: f64) -> Result<(ScreenMask, Option<String>)> {
        check_step(ctx, lambda_prev, lambda_next)?;
        if x_prev.len() != self.partition.feature_count() {
            return Err(Error::Dimension("previous solution length differs from feature count".into()).into());
        }
        let setup = dual_setup_for(ctx, &self.partition, lambda_prev, lambda_next);
        let mut payload = vec![
            setup.lambda_prev,
            setup.lambda_next,
            if setup.at_lambda_max { 1.0 } else { 0.0 },
            setup.g_star as f64,
        ];
        payload.extend_from_slice(x_prev);
        payload.extend_from_slice(&setup.g_star_correlation);
        let [v1_sq, v1_v2] = moments_pair(&self.session.sum(Op::DualSetup, &payload)?)?;
        let Some(alpha) = projection_coefficient(v1_sq, v1_v2) else {
            let mask = ScreenMask {
                rule: ScreenRule::Edpp,
                ..ScreenMask::keep_all(lambda_next, self.partition.group_count())
            };
            return Ok((mask, Some("v1 vanished; no groups screened at this step".into())));
        };
        let perp_sq = self.session.sum(Op::DualProject, &[alpha])?[0];
        let corr = self.session.sum(Op::ScreenCorrelation, &[])?;
        Ok((edpp_decide(ctx, &self.partition, lambda_next, &corr, perp_sq.sqrt()), None))
    }

    fn solve(&mut self, lambda: f64, kept: &[usize], warm: &[f64], solve: &SolveOptions, gap_tol: f64) -> Result<Solution> {
        let opts = SolveOptions {
            gap_tol: Some(gap_tol),
            ..solve.clone()
        };
        dbcd_solve(self, lambda, kept, warm, &opts).map_err(|a| a.error)
    }

    fn evaluate(&mut self, x: &[f64]) -> Result<(Vec<f64>, [f64; 2])> {
        let mut out = self.session.sum(Op::Evaluate, x)?;
        if out.len() != self.partition.feature_count() + 2 {
            return Err(LqmError::Protocol(format!("evaluate returned {} values", out.len())));
        }
        let ry = out.pop().unwrap();
        let rsq = out.pop().unwrap();
        Ok((out, [rsq, ry]))
    }
}

/// Distributed strong rule at `lambda`.
pub fn dsr_mask(engine: &mut DistributedEngine, lambda: f64) -> Result<ScreenMask> {
    let ctx = engine.context()?;
    Ok(screening::strong_rule_mask(&ctx.group_correlations, &engine.partition, lambda, ctx.lambda_max)?)
}

/// A solve that stopped on a transport or site failure. `partial` holds the
/// iterate reached so far; its objective and gap are unknown (NaN).
#[derive(Debug)]
pub struct DbcdAbort {
    pub partial: Solution,
    pub error: LqmError,
}

/// Distributed block coordinate descent on the groups in `kept`.
pub fn dbcd_solve(
    engine: &mut DistributedEngine,
    lambda: f64,
    kept: &[usize],
    warm: &[f64],
    opts: &SolveOptions,
) -> std::result::Result<Solution, DbcdAbort> {
    let p = &engine.partition;
    let mut x = vec![0.0; p.feature_count()];
    if warm.len() == x.len() {
        for &g in kept.iter().filter(|&&g| g < p.group_count()) {
            let r = p.range(g);
            x[r.clone()].copy_from_slice(&warm[r]);
        }
    }
    let mut track = |g: usize, block: &[f64]| x[p.range(g)].copy_from_slice(block);
    let mut backend = Remote {
        session: &mut engine.session,
    };
    let result = bcd_drive(&mut backend, p, lambda, kept, warm, opts, Some(&mut track));
    result.map_err(|error| DbcdAbort {
        partial: Solution {
            x: GroupVector::from_values(x.clone(), p).unwrap_or_else(|_| GroupVector::zeros(p)),
            objective: f64::NAN,
            gap: f64::NAN,
            epochs_used: 0,
            converged: false,
        },
        error,
    })
}

/// Dual-projection screened path solved by distributed BCD.
pub fn ddpp_gl_path(engine: &mut DistributedEngine, opts: &PathOptions) -> std::result::Result<PathModels, PathAbort<LqmError>> {
    let opts = PathOptions {
        screen: ScreenMode::Ddpp,
        ..opts.clone()
    };
    run_path_resumable(engine, &opts)
}

/// What the master runs against a set of connected sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterPlan {
    pub group_sizes: Vec<usize>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub standardize: bool,
    pub lambda_count: usize,
    pub lmin_ratio: f64,
    /// `none`, `strong` or `ddpp`.
    pub screen: String,
    pub gap_tol: f64,
    pub seed: u64,
    pub max_epochs: usize,
}

impl MasterPlan {
    pub fn partition(&self) -> Result<GroupPartition> {
        Ok(make_partition(&self.group_sizes, &WeightRule::Explicit(self.weights.clone()))?)
    }

    pub fn path_options(&self) -> Result<PathOptions> {
        let screen = match self.screen.as_str() {
            "none" => ScreenMode::None,
            "strong" => ScreenMode::Strong,
            "ddpp" => ScreenMode::Ddpp,
            other => return Err(Error::InvalidArgument(format!("unknown screen mode {other:?}")).into()),
        };
        let mut opts = PathOptions {
            screen,
            gap_tol: self.gap_tol,
            ..PathOptions::default()
        };
        opts.spec.count = self.lambda_count;
        opts.spec.lmin_ratio = self.lmin_ratio;
        opts.solve.seed = self.seed;
        opts.solve.max_epochs = self.max_epochs;
        Ok(opts)
    }
}

/// Builds the engine, runs the plan's path and shuts the sites down.
pub fn run_master(session: Session, plan: &MasterPlan) -> std::result::Result<PathModels, PathAbort<LqmError>> {
    let abort = |error: LqmError| PathAbort { completed: None, error };
    let partition = plan.partition().map_err(abort)?;
    let opts = plan.path_options().map_err(abort)?;
    let mut engine = DistributedEngine::new(session, &partition).map_err(abort)?;
    if plan.standardize {
        engine.standardize().map_err(abort)?;
    }
    let result = run_path_resumable(&mut engine, &opts);
    engine.session_mut().shutdown();
    result
}
