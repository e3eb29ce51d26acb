use std::ops::Range;

use super::{check_kept, check_problem, gap_from_moments, group_prox, masked_start, max_group_ratio, Solution};
use crate::design::{GroupVector, GroupedDesign};
use crate::error::{Error, Result};
use crate::kernels::{dot, sq_norm};
use crate::linalg::{power_iteration, POWER_MAX_ITER, POWER_TOL};
use crate::partition::GroupPartition;

#[derive(Debug, Clone, PartialEq)]
pub struct FistaOptions {
    pub tol_gap: f64,
    /// Interpret `tol_gap` relative to `1 + |objective|`.
    pub relative: bool,
    pub max_iter: usize,
    pub check_every: usize,
}

impl Default for FistaOptions {
    fn default() -> Self {
        Self {
            tol_gap: 1e-10,
            relative: false,
            max_iter: 1_000_000,
            check_every: 10,
        }
    }
}

/// Accelerated proximal gradient with gradient-based momentum restart, run
/// until the duality gap drops to `tol_gap`.
pub fn fista_solve(design: &GroupedDesign, partition: &GroupPartition, lambda: f64, tol_gap: f64) -> Result<Solution> {
    let all: Vec<usize> = (0..partition.group_count()).collect();
    let opts = FistaOptions {
        tol_gap,
        ..FistaOptions::default()
    };
    fista_solve_with(design, partition, lambda, &all, &vec![0.0; design.cols()], &opts)
}

struct Restricted<'a> {
    design: &'a GroupedDesign,
    ranges: Vec<Range<usize>>,
}

impl Restricted<'_> {
    // A_K x - y
    fn residual(&self, x: &[f64]) -> Vec<f64> {
        (0..self.design.rows())
            .map(|i| {
                let row = self.design.row(i);
                let ax: f64 = self.ranges.iter().map(|r| dot(&row[r.clone()], &x[r.clone()])).sum();
                ax - self.design.response()[i]
            })
            .collect()
    }

    // A_K^T v
    fn transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.design.cols()];
        for (i, &vi) in v.iter().enumerate() {
            let row = self.design.row(i);
            for r in &self.ranges {
                for (o, a) in out[r.clone()].iter_mut().zip(&row[r.clone()]) {
                    *o += a * vi;
                }
            }
        }
        out
    }
}

pub fn fista_solve_with(
    design: &GroupedDesign,
    partition: &GroupPartition,
    lambda: f64,
    kept: &[usize],
    warm: &[f64],
    opts: &FistaOptions,
) -> Result<Solution> {
    check_problem(design, partition, lambda)?;
    check_kept(partition, kept, warm)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let op = Restricted {
        design,
        ranges: kept.iter().map(|&g| partition.range(g)).collect(),
    };
    let y = design.response();
    let mut x = masked_start(partition, kept, warm);

    let gap_at = |x: &[f64]| -> (f64, f64) {
        let r = op.residual(x);
        let grad = op.transpose(&r);
        let rsq = sq_norm(&r);
        let obj = 0.5 * rsq + lambda * partition.penalty(x);
        let gap = gap_from_moments(rsq, dot(&r, y), partition.penalty(x), lambda, max_group_ratio(&grad, partition, kept));
        (obj, gap)
    };
    let done = |obj: f64, gap: f64| gap <= opts.tol_gap * if opts.relative { 1.0 + obj.abs() } else { 1.0 };

    let (mut obj, mut gap) = gap_at(&x);
    if kept.is_empty() || done(obj, gap) {
        return Ok(Solution {
            x: GroupVector::from_values(x, partition)?,
            objective: obj,
            gap,
            epochs_used: 0,
            converged: true,
        });
    }

    let col_norms: Vec<(f64, usize)> = kept
        .iter()
        .flat_map(|&g| partition.range(g))
        .map(|j| ((0..design.rows()).map(|i| design.get(i, j).powi(2)).sum::<f64>(), j))
        .collect();
    let (floor, arg) = col_norms.iter().copied().fold((0.0f64, 0usize), |acc, c| if c.0 > acc.0 { c } else { acc });
    let estimate = power_iteration(
        design.cols(),
        |v, out| {
            let r: Vec<f64> = op.residual(v).iter().zip(y).map(|(a, b)| a + b).collect();
            out.copy_from_slice(&op.transpose(&r));
        },
        floor,
        Some(arg),
        POWER_TOL,
        POWER_MAX_ITER,
    );
    let lip = match estimate {
        Ok(l) => l * (1.0 + 1e-9),
        // trace of the Gram: a looser but valid upper bound
        Err(Error::PowerIteration { .. }) => col_norms.iter().map(|c| c.0).sum(),
        Err(e) => return Err(e),
    };
    if !(lip > 0.0) {
        return Err(Error::ZeroGroup(kept[0]));
    }

    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let grad = op.transpose(&op.residual(&z));
        let mut next = vec![0.0; x.len()];
        for &g in kept {
            let cols = partition.range(g);
            let u: Vec<f64> = z[cols.clone()].iter().zip(&grad[cols.clone()]).map(|(a, b)| a - b / lip).collect();
            next[cols].copy_from_slice(&group_prox(&u, lambda * partition.weight(g) / lip));
        }
        let restart: f64 = z
            .iter()
            .zip(&next)
            .zip(&x)
            .map(|((zi, ni), xi)| (zi - ni) * (ni - xi))
            .sum();
        if restart > 0.0 {
            t = 1.0;
            z.clone_from(&next);
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            for ((zi, ni), xi) in z.iter_mut().zip(&next).zip(&x) {
                *zi = ni + beta * (ni - xi);
            }
            t = t_next;
        }
        x = next;
        if iterations % opts.check_every.max(1) == 0 {
            (obj, gap) = gap_at(&x);
            if done(obj, gap) {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        (obj, gap) = gap_at(&x);
        converged = done(obj, gap);
    }
    Ok(Solution {
        x: GroupVector::from_values(x, partition)?,
        objective: obj,
        gap,
        epochs_used: iterations,
        converged,
    })
}
