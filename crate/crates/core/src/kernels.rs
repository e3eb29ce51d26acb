//! Row-block kernels.
//!
//! Every quantity that crosses a site boundary is computed here, on one
//! contiguous row block at a time. Single-node code runs the same kernels
//! over a list of blocks and folds the partials with [`sum_ascending`], so a
//! distributed run over the same row boundaries reproduces it bit for bit.

use std::ops::Range;

use crate::design::BlockView;
use crate::error::{Error, Result};
use crate::partition::GroupPartition;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    sq_norm(a).sqrt()
}

/// Element-wise sum of equally sized partials, folded in slice order.
pub fn sum_ascending(partials: &[Vec<f64>]) -> Result<Vec<f64>> {
    let (first, rest) = partials
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("no partials to sum".into()))?;
    let mut acc = first.clone();
    for p in rest {
        if p.len() != acc.len() {
            return Err(Error::Dimension(format!(
                "partial of length {} added to aggregate of length {}",
                p.len(),
                acc.len()
            )));
        }
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    Ok(acc)
}

/// `A^T v` over all columns.
pub fn transpose_mul(view: &BlockView<'_>, v: &[f64]) -> Vec<f64> {
    debug_assert_eq!(v.len(), view.rows);
    let p = view.cols;
    let mut out = vec![0.0; p];
    for (i, &vi) in v.iter().enumerate() {
        let row = &view.matrix[i * p..(i + 1) * p];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * vi;
        }
    }
    out
}

/// `A^T v` restricted to the groups flagged in `include`; other entries stay zero.
pub fn transpose_mul_groups(view: &BlockView<'_>, v: &[f64], partition: &GroupPartition, include: &[bool]) -> Vec<f64> {
    let ranges: Vec<Range<usize>> = (0..partition.group_count())
        .filter(|&g| include[g])
        .map(|g| partition.range(g))
        .collect();
    let p = view.cols;
    let mut out = vec![0.0; p];
    for (i, &vi) in v.iter().enumerate() {
        let row = &view.matrix[i * p..(i + 1) * p];
        for r in &ranges {
            for (o, a) in out[r.clone()].iter_mut().zip(&row[r.clone()]) {
                *o += a * vi;
            }
        }
    }
    out
}

/// `[A]_g^T v` for the column range of one group.
pub fn group_transpose_mul(view: &BlockView<'_>, cols: Range<usize>, v: &[f64]) -> Vec<f64> {
    let p = view.cols;
    let mut out = vec![0.0; cols.len()];
    for (i, &vi) in v.iter().enumerate() {
        let chunk = &view.matrix[i * p + cols.start..i * p + cols.end];
        for (o, a) in out.iter_mut().zip(chunk) {
            *o += a * vi;
        }
    }
    out
}

/// `out += [A]_g delta`.
pub fn add_group_mul(view: &BlockView<'_>, cols: Range<usize>, delta: &[f64], out: &mut [f64]) {
    let p = view.cols;
    for (i, o) in out.iter_mut().enumerate() {
        let chunk = &view.matrix[i * p + cols.start..i * p + cols.end];
        *o += dot(chunk, delta);
    }
}

/// Residual `A x - y`, accumulating the nonzero groups of `x` in ascending order.
pub fn residual(view: &BlockView<'_>, x: &[f64], partition: &GroupPartition) -> Vec<f64> {
    let mut r: Vec<f64> = view.response.iter().map(|y| -y).collect();
    for g in 0..partition.group_count() {
        let cols = partition.range(g);
        if x[cols.clone()].iter().any(|&v| v != 0.0) {
            add_group_mul(view, cols.clone(), &x[cols], &mut r);
        }
    }
    r
}

/// `[A]_g^T [A]_g` stored row-major.
pub fn group_gram(view: &BlockView<'_>, cols: Range<usize>) -> Vec<f64> {
    let k = cols.len();
    let p = view.cols;
    let mut out = vec![0.0; k * k];
    for i in 0..view.rows {
        let chunk = &view.matrix[i * p + cols.start..i * p + cols.end];
        for a in 0..k {
            let ca = chunk[a];
            for b in 0..k {
                out[a * k + b] += ca * chunk[b];
            }
        }
    }
    out
}

/// Column sums, column sums of squares, response sum and row count:
/// `[sum_a (P), sum_a2 (P), sum_y, n]`.
pub fn column_moments(view: &BlockView<'_>) -> Vec<f64> {
    let p = view.cols;
    let mut out = vec![0.0; 2 * p + 2];
    for i in 0..view.rows {
        let row = &view.matrix[i * p..(i + 1) * p];
        for (j, &a) in row.iter().enumerate() {
            out[j] += a;
            out[p + j] += a * a;
        }
    }
    out[2 * p] = view.response.iter().sum();
    out[2 * p + 1] = view.rows as f64;
    out
}

/// Parameters of one dual-projection screening step, identical at every block.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSetup {
    pub lambda_prev: f64,
    pub lambda_next: f64,
    /// `lambda_prev` is `lambda_max`: the dual point is `y / lambda_max`
    /// and `v1` is built from the maximizing group.
    pub at_lambda_max: bool,
    pub g_star: usize,
    /// `[A]_{g*}^T y`, the aggregated correlation of the maximizing group.
    pub g_star_correlation: Vec<f64>,
}

/// Per-block slices of the dual geometry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SiteDual {
    pub theta: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub v2_perp: Vec<f64>,
}

/// Builds `theta`, `v1`, `v2` on one block from its residual `A x_prev - y`.
/// Returns the slices and the scalar partials `[||v1||^2, <v1, v2>]`.
pub fn dual_setup(view: &BlockView<'_>, residual: &[f64], partition: &GroupPartition, setup: &DualSetup) -> (SiteDual, [f64; 2]) {
    let y = view.response;
    let theta: Vec<f64> = if setup.at_lambda_max {
        y.iter().map(|v| v / setup.lambda_prev).collect()
    } else {
        residual.iter().map(|r| -r / setup.lambda_prev).collect()
    };
    let v1: Vec<f64> = if setup.at_lambda_max {
        let mut v = vec![0.0; view.rows];
        add_group_mul(view, partition.range(setup.g_star), &setup.g_star_correlation, &mut v);
        v
    } else {
        y.iter().zip(&theta).map(|(yi, t)| yi / setup.lambda_prev - t).collect()
    };
    let v2: Vec<f64> = y.iter().zip(&theta).map(|(yi, t)| yi / setup.lambda_next - t).collect();
    let partials = [sq_norm(&v1), dot(&v1, &v2)];
    (
        SiteDual {
            theta,
            v1,
            v2,
            v2_perp: Vec::new(),
        },
        partials,
    )
}

/// `v2_perp = v2 - alpha v1` with the globally aggregated `alpha = <v1,v2>/||v1||^2`.
/// Returns the partial `||v2_perp||^2`.
pub fn dual_project(dual: &mut SiteDual, alpha: f64) -> f64 {
    dual.v2_perp = dual.v2.iter().zip(&dual.v1).map(|(b, a)| b - alpha * a).collect();
    sq_norm(&dual.v2_perp)
}

/// Partial `A^T (theta + v2_perp / 2)`.
pub fn screen_correlation(view: &BlockView<'_>, dual: &SiteDual) -> Vec<f64> {
    let centre: Vec<f64> = dual.theta.iter().zip(&dual.v2_perp).map(|(t, v)| t + 0.5 * v).collect();
    transpose_mul(view, &centre)
}
