//! Largest-eigenvalue estimation by power iteration.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::kernels::{dot, norm};

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 10_000;

/// Largest eigenvalue of a symmetric PSD operator given by `apply(v, out)`.
///
/// Starts from the normalized all-ones vector and stops once the Rayleigh
/// quotient changes by at most `tol` relative. If that start is orthogonal to
/// the dominant eigenspace the estimate falls below `floor` (a known lower
/// bound, e.g. the largest diagonal entry); the iteration is then restarted
/// from `fallback_start`.
pub fn power_iteration<F>(dim: usize, mut apply: F, floor: f64, fallback_start: Option<usize>, tol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dim == 0 {
        return Ok(0.0);
    }
    let start = vec![1.0 / (dim as f64).sqrt(); dim];
    let estimate = run(dim, &mut apply, start, tol, max_iter)?;
    if estimate >= floor * (1.0 - 1e-12) {
        return Ok(estimate);
    }
    match fallback_start {
        Some(k) => {
            let mut e = vec![0.0; dim];
            e[k] = 1.0;
            run(dim, &mut apply, e, tol, max_iter)
        }
        None => Ok(estimate),
    }
}

fn run<F>(dim: usize, apply: &mut F, mut v: Vec<f64>, tol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut w = vec![0.0; dim];
    let mut prev = f64::NAN;
    for _ in 0..max_iter {
        apply(&v, &mut w);
        let mu = dot(&v, &w);
        let wn = norm(&w);
        if wn == 0.0 {
            return Ok(0.0);
        }
        if (mu - prev).abs() <= tol * mu.abs() {
            return Ok(mu);
        }
        prev = mu;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
    }
    Err(Error::PowerIteration {
        iterations: max_iter,
        estimate: if prev.is_nan() { 0.0 } else { prev },
    })
}

/// Squared spectral norm of a group block, i.e. the top eigenvalue of its
/// `k x k` row-major Gram matrix.
pub fn spectral_norm_sq(gram: &[f64], k: usize) -> Result<f64> {
    if gram.len() != k * k {
        return Err(Error::Dimension(format!("gram of length {} is not {k} x {k}", gram.len())));
    }
    let (diag_max, arg) = (0..k)
        .map(|i| (gram[i * k + i], i))
        .fold((0.0f64, 0usize), |acc, d| if d.0 > acc.0 { d } else { acc });
    power_iteration(
        k,
        |v, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = dot(&gram[i * k..(i + 1) * k], v);
            }
        },
        diag_max,
        Some(arg),
        POWER_TOL,
        POWER_MAX_ITER,
    )
}

/// `L_g` for one group. Power iteration first; when the top of the spectrum is
/// too clustered for it to converge within the cap, a dense symmetric
/// eigensolver on the (small) Gram instead.
pub fn group_lipschitz(gram: &[f64], k: usize) -> Result<f64> {
    match spectral_norm_sq(gram, k) {
        Err(Error::PowerIteration { .. }) => {
            let m = DMatrix::from_row_slice(k, k, gram);
            Ok(SymmetricEigen::new(m).eigenvalues.max())
        }
        other => other,
    }
}
