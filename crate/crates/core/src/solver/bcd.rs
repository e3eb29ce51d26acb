use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_kept, check_problem, gap_from_moments, group_prox, masked_start, max_group_ratio, Selection, Solution, SolveOptions};
use crate::design::{BlockView, GroupVector, GroupedDesign};
use crate::error::{Error, Result};
use crate::kernels;
use crate::partition::GroupPartition;

/// Where the rows live. The driver only ever sees aggregated quantities;
/// the backend owns the residual `R = A x - y`.
pub trait BcdBackend {
    type Error: From<Error>;

    /// Installs `x` and rebuilds `R = A x - y`.
    fn reset_residual(&mut self, x: &[f64]) -> std::result::Result<(), Self::Error>;

    /// `[A]_g^T R`.
    fn group_gradient(&mut self, g: usize) -> std::result::Result<Vec<f64>, Self::Error>;

    /// `[x]_g <- updated` and `R += [A]_g delta`, where `delta = updated - [x]_g`
    /// was computed by the driver.
    fn apply_delta(&mut self, g: usize, delta: &[f64], updated: &[f64]) -> std::result::Result<(), Self::Error>;

    /// `[||R||^2, <R, y>]`.
    fn residual_moments(&mut self) -> std::result::Result<[f64; 2], Self::Error>;

    /// `A^T R` on the flagged groups, zero elsewhere.
    fn gradient(&mut self, include: &[bool]) -> std::result::Result<Vec<f64>, Self::Error>;
}

/// In-memory backend over one or more row blocks.
pub struct LocalBackend<'a> {
    blocks: Vec<BlockView<'a>>,
    partition: &'a GroupPartition,
    residuals: Vec<Vec<f64>>,
}

impl<'a> LocalBackend<'a> {
    pub fn new(blocks: Vec<BlockView<'a>>, partition: &'a GroupPartition) -> Self {
        let residuals = blocks.iter().map(|b| b.response.iter().map(|y| -y).collect()).collect();
        Self {
            blocks,
            partition,
            residuals,
        }
    }

    pub fn residuals(&self) -> &[Vec<f64>] {
        &self.residuals
    }
}

impl BcdBackend for LocalBackend<'_> {
    type Error = Error;

    fn reset_residual(&mut self, x: &[f64]) -> Result<()> {
        self.residuals = self.blocks.iter().map(|b| kernels::residual(b, x, self.partition)).collect();
        Ok(())
    }

    fn group_gradient(&mut self, g: usize) -> Result<Vec<f64>> {
        let cols = self.partition.range(g);
        let partials: Vec<Vec<f64>> = self
            .blocks
            .iter()
            .zip(&self.residuals)
            .map(|(b, r)| kernels::group_transpose_mul(b, cols.clone(), r))
            .collect();
        kernels::sum_ascending(&partials)
    }

    fn apply_delta(&mut self, g: usize, delta: &[f64], _updated: &[f64]) -> Result<()> {
        let cols = self.partition.range(g);
        for (b, r) in self.blocks.iter().zip(self.residuals.iter_mut()) {
            kernels::add_group_mul(b, cols.clone(), delta, r);
        }
        Ok(())
    }

    fn residual_moments(&mut self) -> Result<[f64; 2]> {
        let partials: Vec<Vec<f64>> = self
            .blocks
            .iter()
            .zip(&self.residuals)
            .map(|(b, r)| vec![kernels::sq_norm(r), kernels::dot(r, b.response)])
            .collect();
        let s = kernels::sum_ascending(&partials)?;
        Ok([s[0], s[1]])
    }

    fn gradient(&mut self, include: &[bool]) -> Result<Vec<f64>> {
        let partials: Vec<Vec<f64>> = self
            .blocks
            .iter()
            .zip(&self.residuals)
            .map(|(b, r)| kernels::transpose_mul_groups(b, r, self.partition, include))
            .collect();
        kernels::sum_ascending(&partials)
    }
}

/// Block coordinate descent over the groups in `kept`, warm-started from
/// `warm` (groups outside `kept` are held at zero).
///
/// Each update takes the gradient step `u = [x]_g - grad_g / L_g` and applies
/// the group prox with threshold `lambda w_g / L_g`. `observer`, if given, sees
/// every changed block right after its update.
pub fn bcd_drive<B: BcdBackend>(
    backend: &mut B,
    partition: &GroupPartition,
    lambda: f64,
    kept: &[usize],
    warm: &[f64],
    opts: &SolveOptions,
    mut observer: Option<&mut dyn FnMut(usize, &[f64])>,
) -> std::result::Result<Solution, B::Error> {
    opts.validate()?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")).into());
    }
    check_kept(partition, kept, warm)?;
    let lipschitz = partition.lipschitz().ok_or(Error::MissingLipschitz)?.to_vec();

    let mut x = masked_start(partition, kept, warm);
    backend.reset_residual(&x)?;
    let include: Vec<bool> = {
        let mut v = vec![false; partition.group_count()];
        kept.iter().for_each(|&g| v[g] = true);
        v
    };

    let [rsq, ry] = backend.residual_moments()?;
    if x.iter().all(|&v| v == 0.0) && !kept.is_empty() {
        // x = 0 is optimal iff max_g ||[A]_g^T y|| / w_g <= lambda
        let grad = backend.gradient(&include)?;
        let ratio = max_group_ratio(&grad, partition, kept);
        if ratio <= lambda {
            return Ok(Solution {
                x: GroupVector::from_values(x, partition)?,
                objective: 0.5 * rsq,
                gap: gap_from_moments(rsq, ry, 0.0, lambda, ratio),
                epochs_used: 1,
                converged: true,
            });
        }
    }
    let mut obj = 0.5 * rsq + lambda * partition.penalty(&x);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = kept.to_vec();
    let mut epochs = 0;
    let mut converged = kept.is_empty();
    let mut last_gap = None;

    while !converged && epochs < opts.max_epochs {
        epochs += 1;
        if opts.selection == Selection::Random {
            order.shuffle(&mut rng);
        }
        for &g in &order {
            let grad = backend.group_gradient(g)?;
            let cols = partition.range(g);
            let step = 1.0 / lipschitz[g];
            let u: Vec<f64> = x[cols.clone()].iter().zip(&grad).map(|(xi, gi)| xi - gi * step).collect();
            let updated = group_prox(&u, lambda * partition.weight(g) * step);
            let delta: Vec<f64> = updated.iter().zip(&x[cols.clone()]).map(|(n, o)| n - o).collect();
            if delta.iter().any(|&d| d != 0.0) {
                backend.apply_delta(g, &delta, &updated)?;
                x[cols].copy_from_slice(&updated);
                if let Some(obs) = observer.as_mut() {
                    obs(g, &updated);
                }
            }
        }

        let [rsq, ry] = backend.residual_moments()?;
        let next = 0.5 * rsq + lambda * partition.penalty(&x);
        debug_assert!(
            next <= obj + 1e-9 * (1.0 + obj.abs()),
            "objective increased over an epoch: {obj} -> {next}"
        );
        converged = match opts.gap_tol {
            Some(tol) => {
                let grad = backend.gradient(&include)?;
                let gap = gap_from_moments(rsq, ry, partition.penalty(&x), lambda, max_group_ratio(&grad, partition, kept));
                last_gap = Some(gap);
                gap <= tol * (1.0 + next.abs())
            }
            None => {
                last_gap = None;
                (obj - next) < opts.tol * obj.abs().max(f64::MIN_POSITIVE)
            }
        };
        obj = next;
    }

    let gap = match last_gap {
        Some(g) => g,
        None => {
            let [rsq, ry] = backend.residual_moments()?;
            let grad = backend.gradient(&include)?;
            gap_from_moments(rsq, ry, partition.penalty(&x), lambda, max_group_ratio(&grad, partition, kept))
        }
    };
    Ok(Solution {
        x: GroupVector::from_values(x, partition)?,
        objective: obj,
        gap,
        epochs_used: epochs,
        converged,
    })
}

/// Cold-start block coordinate descent on the full problem.
pub fn bcd_solve(design: &GroupedDesign, partition: &GroupPartition, lambda: f64, opts: &SolveOptions) -> Result<Solution> {
    let all: Vec<usize> = (0..partition.group_count()).collect();
    bcd_solve_reduced(design, partition, lambda, &all, &vec![0.0; design.cols()], opts)
}

pub fn bcd_solve_reduced(
    design: &GroupedDesign,
    partition: &GroupPartition,
    lambda: f64,
    kept: &[usize],
    warm: &[f64],
    opts: &SolveOptions,
) -> Result<Solution> {
    check_problem(design, partition, lambda)?;
    let mut backend = LocalBackend::new(vec![design.view()], partition);
    bcd_drive(&mut backend, partition, lambda, kept, warm, opts, None)
}
