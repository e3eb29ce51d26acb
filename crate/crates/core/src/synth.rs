//! Seeded synthetic group-sparse regression problems.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::GroupedDesign;
use crate::error::{Error, Result};
use crate::partition::{uniform_partition, GroupPartition, WeightRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub rows: usize,
    pub cols: usize,
    pub group_size: usize,
    pub active_groups: usize,
    /// `var(Ax) / var(noise)`; infinite means no noise.
    pub snr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub design: GroupedDesign,
    pub partition: GroupPartition,
    pub coefficients: Vec<f64>,
    /// Planted groups, ascending.
    pub planted: Vec<usize>,
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Standard normal design, standard normal coefficients on `active_groups`
/// randomly chosen groups, noise rescaled so the sample SNR is exact.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Synthetic> {
    if cfg.rows == 0 || cfg.cols == 0 {
        return Err(Error::InvalidArgument("synthetic problem needs rows and columns".into()));
    }
    if !(cfg.snr > 0.0) {
        return Err(Error::InvalidArgument(format!("snr must be positive, got {}", cfg.snr)));
    }
    let partition = uniform_partition(cfg.cols, cfg.group_size, &WeightRule::SqrtSize)?;
    if cfg.active_groups * cfg.group_size > cfg.cols || cfg.active_groups > partition.group_count() {
        return Err(Error::InvalidArgument(format!(
            "{} active groups of size {} do not fit in {} columns",
            cfg.active_groups, cfg.group_size, cfg.cols
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let matrix: Vec<f64> = (0..cfg.rows * cfg.cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut planted = index::sample(&mut rng, partition.group_count(), cfg.active_groups).into_vec();
    planted.sort_unstable();
    let mut coefficients = vec![0.0; cfg.cols];
    for &g in &planted {
        for c in &mut coefficients[partition.range(g)] {
            *c = StandardNormal.sample(&mut rng);
        }
    }
    let signal: Vec<f64> = matrix.chunks_exact(cfg.cols).map(|row| crate::kernels::dot(row, &coefficients)).collect();
    let noise: Vec<f64> = (0..cfg.rows).map(|_| StandardNormal.sample(&mut rng)).collect();
    let response = if cfg.snr.is_infinite() {
        signal
    } else {
        let (vs, vn) = (variance(&signal), variance(&noise));
        let scale = if vn > 0.0 { (vs / (cfg.snr * vn)).sqrt() } else { 0.0 };
        signal.iter().zip(&noise).map(|(s, e)| s + scale * e).collect()
    };
    let design = GroupedDesign::new(cfg.rows, cfg.cols, matrix, response)?;
    Ok(Synthetic {
        design,
        partition,
        coefficients,
        planted,
    })
}
