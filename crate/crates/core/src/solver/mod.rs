//! Solvers for the group Lasso problem
//!
//! ```text
//! min_x  1/2 ||y - A x||^2 + lambda * sum_g w_g ||[x]_g||_2
//! ```
//!
//! Block coordinate descent is the production solver; FISTA and ADMM are
//! independent routes used as oracles and as the benchmark baseline.

mod admm;
mod bcd;
mod fista;

pub use admm::{admm_solve, admm_solve_with, AdmmOptions};
pub use bcd::{bcd_drive, bcd_solve, bcd_solve_reduced, BcdBackend, LocalBackend};
pub use fista::{fista_solve, fista_solve_with, FistaOptions};

use serde::{Deserialize, Serialize};

use crate::design::{GroupVector, GroupedDesign};
use crate::error::{Error, Result};
use crate::kernels::{self, norm, sq_norm};
use crate::partition::GroupPartition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Cyclic,
    /// A fresh seeded shuffle of the groups every epoch.
    #[default]
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_epochs: usize,
    /// Relative objective decrease over one epoch below which the solve stops.
    pub tol: f64,
    pub seed: u64,
    pub selection: Selection,
    /// When set, stop instead once the duality gap is at most
    /// `gap_tol * (1 + |objective|)`, checked once per epoch.
    pub gap_tol: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_epochs: 10_000,
            tol: 1e-8,
            seed: 0,
            selection: Selection::Random,
            gap_tol: None,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidArgument("max_epochs must be at least 1".into()));
        }
        if let Some(g) = self.gap_tol {
            if !(g > 0.0) {
                return Err(Error::InvalidArgument(format!("gap_tol must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: GroupVector,
    pub objective: f64,
    pub gap: f64,
    pub epochs_used: usize,
    pub converged: bool,
}

/// `1/2 ||y - A x||^2 + lambda sum_g w_g ||[x]_g||`.
pub fn objective(design: &GroupedDesign, partition: &GroupPartition, x: &GroupVector, lambda: f64) -> Result<f64> {
    check_problem(design, partition, lambda)?;
    if x.values().len() != design.cols() {
        return Err(Error::Dimension("coefficient vector length differs from feature count".into()));
    }
    let r = kernels::residual(&design.view(), x.values(), partition);
    Ok(0.5 * sq_norm(&r) + lambda * partition.penalty(x.values()))
}

/// Group soft-thresholding `(1 - t / ||u||)_+ u`.
pub fn group_prox(u: &[f64], t: f64) -> Vec<f64> {
    let n = norm(u);
    if n <= t {
        return vec![0.0; u.len()];
    }
    let scale = 1.0 - t / n;
    u.iter().map(|v| scale * v).collect()
}

/// Duality gap at `x` with the dual point obtained by scaling the residual
/// into the dual feasible set.
pub fn duality_gap(design: &GroupedDesign, partition: &GroupPartition, x: &GroupVector, lambda: f64) -> Result<f64> {
    check_problem(design, partition, lambda)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("duality gap needs lambda > 0".into()));
    }
    let view = design.view();
    let y = design.response();
    // r = y - A x
    let r: Vec<f64> = kernels::residual(&view, x.values(), partition).iter().map(|v| -v).collect();
    let corr = kernels::transpose_mul(&view, &r);
    let max_ratio = (0..partition.group_count())
        .map(|g| norm(&corr[partition.range(g)]) / partition.weight(g))
        .fold(0.0f64, f64::max);
    let s = if max_ratio > 0.0 { (lambda / max_ratio).min(1.0) } else { 1.0 };
    let primal = 0.5 * sq_norm(&r) + lambda * partition.penalty(x.values());
    let dist: f64 = r.iter().zip(y).map(|(ri, yi)| (s * ri / lambda - yi / lambda).powi(2)).sum();
    let dual = 0.5 * sq_norm(y) - 0.5 * lambda * lambda * dist;
    Ok(primal - dual)
}

/// Duality gap from residual moments `||R||^2`, `<R, y>` (with `R = A x - y`),
/// the penalty and `max_g ||[A]_g^T R|| / w_g` over the groups of the problem.
pub fn gap_from_moments(rsq: f64, ry: f64, penalty: f64, lambda: f64, max_ratio: f64) -> f64 {
    let s = if max_ratio > 0.0 { (lambda / max_ratio).min(1.0) } else { 1.0 };
    0.5 * (1.0 + s * s) * rsq + s * ry + lambda * penalty
}

/// `max_{g in groups} ||[grad]_g|| / w_g`.
pub fn max_group_ratio(grad: &[f64], partition: &GroupPartition, groups: &[usize]) -> f64 {
    groups
        .iter()
        .map(|&g| norm(&grad[partition.range(g)]) / partition.weight(g))
        .fold(0.0f64, f64::max)
}

fn check_problem(design: &GroupedDesign, partition: &GroupPartition, lambda: f64) -> Result<()> {
    design.check_partition(partition)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    Ok(())
}

fn check_kept(partition: &GroupPartition, kept: &[usize], warm: &[f64]) -> Result<()> {
    if warm.len() != partition.feature_count() {
        return Err(Error::Dimension("warm start length differs from feature count".into()));
    }
    if let Some(&g) = kept.iter().find(|&&g| g >= partition.group_count()) {
        return Err(Error::InvalidArgument(format!("group {g} out of range")));
    }
    Ok(())
}

/// Copy of `warm` with every group outside `kept` zeroed.
fn masked_start(partition: &GroupPartition, kept: &[usize], warm: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; partition.feature_count()];
    for &g in kept {
        let r = partition.range(g);
        x[r.clone()].copy_from_slice(&warm[r]);
    }
    x
}
