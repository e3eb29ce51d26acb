//! Screening rules: the basic strong rule, the sequential dual polytope
//! projection (EDPP) safe rule for group Lasso, and KKT post-checks.

use serde::{Deserialize, Serialize};

use crate::design::{self, BlockView, GroupVector, GroupedDesign};
use crate::error::{Error, Result};
use crate::kernels::{self, norm, DualSetup, SiteDual};
use crate::partition::GroupPartition;

/// Relative slack allowed before a discarded group counts as a KKT violation.
pub const KKT_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenRule {
    None,
    Strong,
    Edpp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenMask {
    pub lambda: f64,
    pub kept: Vec<usize>,
    pub discarded: Vec<usize>,
    pub rule: ScreenRule,
    /// Whether the discards are guaranteed. Strong-rule masks never are; EDPP
    /// masks lose the guarantee when the previous solution was inexact.
    pub safe: bool,
    /// Signed relative distance of every group's test statistic from its
    /// threshold; positive means discarded.
    #[serde(skip)]
    pub margins: Vec<f64>,
}

impl ScreenMask {
    pub fn keep_all(lambda: f64, group_count: usize) -> Self {
        Self {
            lambda,
            kept: (0..group_count).collect(),
            discarded: Vec::new(),
            rule: ScreenRule::None,
            safe: true,
            margins: Vec::new(),
        }
    }

    /// Every group discarded, as at `lambda_max` where the solution is zero.
    pub fn discard_all(lambda: f64, group_count: usize, rule: ScreenRule) -> Self {
        Self {
            lambda,
            kept: Vec::new(),
            discarded: (0..group_count).collect(),
            rule,
            safe: true,
            margins: Vec::new(),
        }
    }

    fn from_flags(lambda: f64, discard: &[bool], rule: ScreenRule, safe: bool, margins: Vec<f64>) -> Self {
        let (mut kept, mut discarded) = (Vec::new(), Vec::new());
        for (g, &d) in discard.iter().enumerate() {
            if d {
                discarded.push(g);
            } else {
                kept.push(g);
            }
        }
        Self {
            lambda,
            kept,
            discarded,
            rule,
            safe,
            margins,
        }
    }

    /// Moves `groups` from the discarded set back into the kept set.
    pub fn readmit(&mut self, groups: &[usize]) {
        self.discarded.retain(|g| !groups.contains(g));
        self.kept.extend_from_slice(groups);
        self.kept.sort_unstable();
        self.kept.dedup();
    }

    pub fn rejection_rate(&self) -> f64 {
        let total = self.kept.len() + self.discarded.len();
        if total == 0 {
            0.0
        } else {
            self.discarded.len() as f64 / total as f64
        }
    }
}

/// Dual geometry of one screening step, concatenated over row blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub theta: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub v2_perp: Vec<f64>,
    pub lambda_prev: f64,
    pub lambda_next: f64,
}

/// Dataset-level quantities every screening rule needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningContext {
    /// `A^T y`.
    pub correlation: Vec<f64>,
    /// `||[A]_g^T y||`.
    pub group_correlations: Vec<f64>,
    pub lambda_max: f64,
    pub g_star: usize,
    /// `||[A]_g||_2` (or an upper bound on it).
    pub group_norms: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormBound {
    #[default]
    Spectral,
    /// Frobenius norms: larger, hence fewer discards, hence still safe.
    Frobenius,
}

impl ScreeningContext {
    /// Builds the context from aggregated `A^T y` and per-group norms.
    pub fn from_parts(correlation: Vec<f64>, partition: &GroupPartition, group_norms: Vec<f64>) -> Result<Self> {
        if correlation.len() != partition.feature_count() || group_norms.len() != partition.group_count() {
            return Err(Error::Dimension("screening context does not match the partition".into()));
        }
        let group_correlations = partition.block_norms(&correlation);
        let (lambda_max, g_star) = design::lambda_max(&group_correlations, partition)?;
        Ok(Self {
            correlation,
            group_correlations,
            lambda_max,
            g_star,
            group_norms,
        })
    }

    /// Requires Lipschitz constants on `partition` for the spectral bound.
    pub fn new(design: &GroupedDesign, partition: &GroupPartition, bound: NormBound) -> Result<Self> {
        design.check_partition(partition)?;
        let norms = match bound {
            NormBound::Spectral => partition.lipschitz().ok_or(Error::MissingLipschitz)?.iter().map(|l| l.sqrt()).collect(),
            NormBound::Frobenius => design::group_frobenius_norms(design, partition),
        };
        Self::from_parts(design::correlation_vector(&[design.view()])?, partition, norms)
    }
}

/// Basic strong rule: discard `g` iff `c_g <= w_g (2 lambda - lambda_max)`.
/// When `2 lambda - lambda_max` is negative only zero-correlation groups go.
pub fn strong_rule_mask(correlations: &[f64], partition: &GroupPartition, lambda: f64, lambda_max: f64) -> Result<ScreenMask> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if lambda > lambda_max {
        return Err(Error::InvalidArgument(format!("lambda {lambda} exceeds lambda_max {lambda_max}")));
    }
    if correlations.len() != partition.group_count() {
        return Err(Error::Dimension("one correlation per group expected".into()));
    }
    let slack = (2.0 * lambda - lambda_max).max(0.0);
    let mut discard = vec![false; correlations.len()];
    let mut margins = vec![0.0; correlations.len()];
    for (g, &c) in correlations.iter().enumerate() {
        let threshold = partition.weight(g) * slack;
        discard[g] = c <= threshold;
        margins[g] = (threshold - c) / threshold.abs().max(f64::MIN_POSITIVE);
    }
    Ok(ScreenMask::from_flags(lambda, &discard, ScreenRule::Strong, false, margins))
}

/// `v1` at `lambda_max`: `[A]_{g*} [A]_{g*}^T y`.
pub fn edpp_init(design: &GroupedDesign, partition: &GroupPartition, g_star: usize) -> Result<Vec<f64>> {
    design.check_partition(partition)?;
    if g_star >= partition.group_count() {
        return Err(Error::InvalidArgument(format!("group {g_star} out of range")));
    }
    let view = design.view();
    let cols = partition.range(g_star);
    let l = kernels::group_transpose_mul(&view, cols.clone(), design.response());
    let mut v1 = vec![0.0; design.rows()];
    kernels::add_group_mul(&view, cols, &l, &mut v1);
    Ok(v1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdppStep {
    pub mask: ScreenMask,
    pub dual: DualState,
    /// Set when the step could not project and kept every group.
    pub diagnostic: Option<String>,
}

/// Checks the ordering `lambda_max >= lambda_prev >= lambda_next > 0`.
pub fn check_step(ctx: &ScreeningContext, lambda_prev: f64, lambda_next: f64) -> Result<()> {
    if !(lambda_next > 0.0 && lambda_next <= lambda_prev && lambda_prev <= ctx.lambda_max) {
        return Err(Error::InvalidArgument(format!(
            "screening step needs lambda_max ({}) >= lambda_prev ({lambda_prev}) >= lambda_next ({lambda_next}) > 0",
            ctx.lambda_max
        )));
    }
    Ok(())
}

pub fn dual_setup_for(ctx: &ScreeningContext, partition: &GroupPartition, lambda_prev: f64, lambda_next: f64) -> DualSetup {
    DualSetup {
        lambda_prev,
        lambda_next,
        at_lambda_max: lambda_prev >= ctx.lambda_max,
        g_star: ctx.g_star,
        g_star_correlation: ctx.correlation[partition.range(ctx.g_star)].to_vec(),
    }
}

/// `<v1, v2> / ||v1||^2`, or `None` when `v1` vanishes.
pub fn projection_coefficient(v1_sq: f64, v1_v2: f64) -> Option<f64> {
    (v1_sq > 0.0).then(|| v1_v2 / v1_sq)
}

/// The per-group rejection test: discard `g` iff
/// `||[A]_g^T (theta + v2_perp/2)|| < w_g - ||v2_perp|| ||[A]_g|| / 2`.
pub fn edpp_decide(ctx: &ScreeningContext, partition: &GroupPartition, lambda_next: f64, screen_corr: &[f64], v2_perp_norm: f64) -> ScreenMask {
    let groups = partition.group_count();
    let mut discard = vec![false; groups];
    let mut margins = vec![0.0; groups];
    for g in 0..groups {
        let lhs = norm(&screen_corr[partition.range(g)]);
        let threshold = partition.weight(g) - 0.5 * v2_perp_norm * ctx.group_norms[g];
        discard[g] = lhs < threshold;
        margins[g] = (threshold - lhs) / threshold.abs().max(f64::MIN_POSITIVE);
    }
    ScreenMask::from_flags(lambda_next, &discard, ScreenRule::Edpp, true, margins)
}

/// One sequential EDPP step from the solution at `lambda_prev` to `lambda_next`.
pub fn edpp_screen_step(
    design: &GroupedDesign,
    partition: &GroupPartition,
    ctx: &ScreeningContext,
    x_prev: &GroupVector,
    lambda_prev: f64,
    lambda_next: f64,
) -> Result<EdppStep> {
    design.check_partition(partition)?;
    edpp_screen_step_blocks(&[design.view()], partition, ctx, x_prev.values(), lambda_prev, lambda_next)
}

/// Same step over row blocks, aggregating every partial in block order.
pub fn edpp_screen_step_blocks(
    blocks: &[BlockView<'_>],
    partition: &GroupPartition,
    ctx: &ScreeningContext,
    x_prev: &[f64],
    lambda_prev: f64,
    lambda_next: f64,
) -> Result<EdppStep> {
    check_step(ctx, lambda_prev, lambda_next)?;
    if x_prev.len() != partition.feature_count() {
        return Err(Error::Dimension("previous solution length differs from feature count".into()));
    }
    let setup = dual_setup_for(ctx, partition, lambda_prev, lambda_next);
    let mut duals: Vec<SiteDual> = Vec::with_capacity(blocks.len());
    let mut partials = Vec::with_capacity(blocks.len());
    for b in blocks {
        let r = kernels::residual(b, x_prev, partition);
        let (d, p) = kernels::dual_setup(b, &r, partition, &setup);
        duals.push(d);
        partials.push(p.to_vec());
    }
    let sums = kernels::sum_ascending(&partials)?;

    let Some(alpha) = projection_coefficient(sums[0], sums[1]) else {
        let dual = concat_dual(&duals, lambda_prev, lambda_next);
        return Ok(EdppStep {
            mask: ScreenMask {
                rule: ScreenRule::Edpp,
                ..ScreenMask::keep_all(lambda_next, partition.group_count())
            },
            dual,
            diagnostic: Some("v1 vanished; no groups screened at this step".into()),
        });
    };
    let perp_partials: Vec<Vec<f64>> = duals.iter_mut().map(|d| vec![kernels::dual_project(d, alpha)]).collect();
    let perp_norm = kernels::sum_ascending(&perp_partials)?[0].sqrt();
    let corr_partials: Vec<Vec<f64>> = blocks.iter().zip(&duals).map(|(b, d)| kernels::screen_correlation(b, d)).collect();
    let corr = kernels::sum_ascending(&corr_partials)?;
    Ok(EdppStep {
        mask: edpp_decide(ctx, partition, lambda_next, &corr, perp_norm),
        dual: concat_dual(&duals, lambda_prev, lambda_next),
        diagnostic: None,
    })
}

fn concat_dual(duals: &[SiteDual], lambda_prev: f64, lambda_next: f64) -> DualState {
    let cat = |f: fn(&SiteDual) -> &Vec<f64>| duals.iter().flat_map(|d| f(d).iter().copied()).collect::<Vec<f64>>();
    DualState {
        theta: cat(|d| &d.theta),
        v1: cat(|d| &d.v1),
        v2: cat(|d| &d.v2),
        v2_perp: cat(|d| &d.v2_perp),
        lambda_prev,
        lambda_next,
    }
}

/// Discarded groups whose correlation with the residual breaks the KKT bound
/// `||[A]_g^T (y - A x)|| <= lambda w_g (1 + 1e-8)`.
pub fn kkt_violations(design: &GroupedDesign, partition: &GroupPartition, x: &GroupVector, lambda: f64, mask: &ScreenMask) -> Result<Vec<usize>> {
    design.check_partition(partition)?;
    if mask.discarded.is_empty() {
        return Ok(Vec::new());
    }
    let view = design.view();
    let r = kernels::residual(&view, x.values(), partition);
    let include = partition.indicator(&mask.discarded).iter().map(|&v| v != 0.0).collect::<Vec<_>>();
    let grad = kernels::transpose_mul_groups(&view, &r, partition, &include);
    Ok(kkt_violations_from_gradient(&grad, partition, lambda, &mask.discarded))
}

/// KKT check from an aggregated gradient `A^T (A x - y)` (the sign is irrelevant).
pub fn kkt_violations_from_gradient(grad: &[f64], partition: &GroupPartition, lambda: f64, discarded: &[usize]) -> Vec<usize> {
    discarded
        .iter()
        .copied()
        .filter(|&g| norm(&grad[partition.range(g)]) > lambda * partition.weight(g) * (1.0 + KKT_SLACK))
        .collect()
}
