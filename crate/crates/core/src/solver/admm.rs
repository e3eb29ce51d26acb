use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{check_kept, check_problem, gap_from_moments, group_prox, masked_start, max_group_ratio, Solution};
use crate::design::{GroupVector, GroupedDesign};
use crate::error::{Error, Result};
use crate::partition::GroupPartition;

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmOptions {
    pub rho: f64,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
    /// Additionally stop once the gap at `z` is at most `gap_tol * (1 + |objective|)`.
    pub gap_tol: Option<f64>,
    pub check_every: usize,
    /// Rebalance `rho` when the primal and dual residuals drift more than a
    /// factor 10 apart (at most `max_rho_updates` times, then fixed).
    pub adaptive_rho: bool,
    pub max_rho_updates: usize,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            rho: 1.0,
            tol_abs: 1e-10,
            tol_rel: 1e-10,
            max_iter: 500_000,
            gap_tol: None,
            check_every: 10,
            adaptive_rho: true,
            max_rho_updates: 50,
        }
    }
}

/// Splitting `x = z`: least-squares x-update through a cached Cholesky
/// factor, group soft-thresholding for z, scaled dual ascent for u.
pub fn admm_solve(design: &GroupedDesign, partition: &GroupPartition, lambda: f64, rho: f64, tol_abs: f64, tol_rel: f64) -> Result<Solution> {
    let all: Vec<usize> = (0..partition.group_count()).collect();
    let opts = AdmmOptions {
        rho,
        tol_abs,
        tol_rel,
        ..AdmmOptions::default()
    };
    admm_solve_with(design, partition, lambda, &all, &vec![0.0; design.cols()], &opts)
}

/// Solves `(A^T A + rho I) x = q`, factoring whichever of the `k x k` or
/// `n x n` systems is smaller (the latter through the matrix inversion lemma).
enum XUpdate {
    Primal(Cholesky<f64, Dyn>),
    Dual(Cholesky<f64, Dyn>),
}

impl XUpdate {
    fn new(a: &DMatrix<f64>, rho: f64) -> Result<Self> {
        let (n, k) = a.shape();
        if k <= n {
            let m = a.transpose() * a + DMatrix::identity(k, k) * rho;
            Cholesky::new(m)
                .map(XUpdate::Primal)
                .ok_or_else(|| Error::Factorization("A^T A + rho I is not positive definite".into()))
        } else {
            let m = a * a.transpose() + DMatrix::identity(n, n) * rho;
            Cholesky::new(m)
                .map(XUpdate::Dual)
                .ok_or_else(|| Error::Factorization("A A^T + rho I is not positive definite".into()))
        }
    }

    fn solve(&self, a: &DMatrix<f64>, rho: f64, q: &DVector<f64>) -> DVector<f64> {
        match self {
            XUpdate::Primal(c) => c.solve(q),
            XUpdate::Dual(c) => {
                let inner = c.solve(&(a * q));
                (q - a.transpose() * inner) / rho
            }
        }
    }
}

pub fn admm_solve_with(
    design: &GroupedDesign,
    partition: &GroupPartition,
    lambda: f64,
    kept: &[usize],
    warm: &[f64],
    opts: &AdmmOptions,
) -> Result<Solution> {
    check_problem(design, partition, lambda)?;
    check_kept(partition, kept, warm)?;
    if !(opts.rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {}", opts.rho)));
    }
    let mut rho = opts.rho;
    let mut rho_updates = 0;
    let cols: Vec<usize> = kept.iter().flat_map(|&g| partition.range(g)).collect();
    let n = design.rows();
    let k = cols.len();
    // local layout: kept groups packed back to back
    let mut local_ranges = Vec::with_capacity(kept.len());
    let mut at = 0;
    for &g in kept {
        local_ranges.push(at..at + partition.size(g));
        at += partition.size(g);
    }

    let finish = |z_local: &DVector<f64>, iterations: usize, converged: bool| -> Result<Solution> {
        let mut x = vec![0.0; design.cols()];
        for (&c, v) in cols.iter().zip(z_local.iter()) {
            x[c] = *v;
        }
        let x = GroupVector::from_values(x, partition)?;
        let (obj, gap) = reduced_gap(design, partition, lambda, kept, x.values());
        Ok(Solution {
            x,
            objective: obj,
            gap,
            epochs_used: iterations,
            converged,
        })
    };

    if k == 0 {
        return finish(&DVector::zeros(0), 0, true);
    }

    let a = DMatrix::from_fn(n, k, |i, j| design.get(i, cols[j]));
    let y = DVector::from_column_slice(design.response());
    let aty = a.transpose() * &y;
    let mut factor = XUpdate::new(&a, rho)?;
    let start = masked_start(partition, kept, warm);
    let mut z = DVector::from_iterator(k, cols.iter().map(|&c| start[c]));
    let mut u = DVector::zeros(k);
    let sqrt_k = (k as f64).sqrt();

    for it in 1..=opts.max_iter {
        let q = &aty + (&z - &u) * rho;
        let x = factor.solve(&a, rho, &q);
        let z_old = z.clone();
        let v = &x + &u;
        for (gi, &g) in kept.iter().enumerate() {
            let r = local_ranges[gi].clone();
            let block = group_prox(&v.as_slice()[r.clone()], lambda * partition.weight(g) / rho);
            z.as_mut_slice()[r].copy_from_slice(&block);
        }
        u += &x - &z;

        let primal = (&x - &z).norm();
        let dual = rho * (&z - &z_old).norm();
        let eps_pri = sqrt_k * opts.tol_abs + opts.tol_rel * x.norm().max(z.norm());
        let eps_dual = sqrt_k * opts.tol_abs + opts.tol_rel * rho * u.norm();
        if primal <= eps_pri && dual <= eps_dual {
            return finish(&z, it, true);
        }
        if opts.adaptive_rho && rho_updates < opts.max_rho_updates && it % opts.check_every.max(1) == 0 {
            let scale = if primal > 10.0 * dual {
                2.0
            } else if dual > 10.0 * primal {
                0.5
            } else {
                1.0
            };
            if scale != 1.0 {
                rho *= scale;
                // scaled dual variable u = y / rho
                u /= scale;
                factor = XUpdate::new(&a, rho)?;
                rho_updates += 1;
            }
        }
        if let Some(tol) = opts.gap_tol {
            if it % opts.check_every.max(1) == 0 {
                let mut full = vec![0.0; design.cols()];
                for (&c, v) in cols.iter().zip(z.iter()) {
                    full[c] = *v;
                }
                let (obj, gap) = reduced_gap(design, partition, lambda, kept, &full);
                if gap <= tol * (1.0 + obj.abs()) {
                    return finish(&z, it, true);
                }
            }
        }
    }
    finish(&z, opts.max_iter, false)
}

fn reduced_gap(design: &GroupedDesign, partition: &GroupPartition, lambda: f64, kept: &[usize], x: &[f64]) -> (f64, f64) {
    let view = design.view();
    let r = crate::kernels::residual(&view, x, partition);
    let mut include = vec![false; partition.group_count()];
    kept.iter().for_each(|&g| include[g] = true);
    let grad = crate::kernels::transpose_mul_groups(&view, &r, partition, &include);
    let rsq = crate::kernels::sq_norm(&r);
    let pen = partition.penalty(x);
    let obj = 0.5 * rsq + lambda * pen;
    let gap = gap_from_moments(rsq, crate::kernels::dot(&r, design.response()), pen, lambda, max_group_ratio(&grad, partition, kept));
    (obj, gap)
}
