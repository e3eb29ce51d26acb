//! Stability selection by half-sampling.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fedgl_core::{GroupPartition, GroupedDesign, PathModels, PathOptions, PathSpec, ScreenMode, SolverKind};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityConfig {
    pub subsamples: usize,
    /// A group counts as selected in a subsample when it is among the first
    /// `q_cap` distinct groups to enter along that subsample's path.
    pub q_cap: usize,
    pub spec: PathSpec,
    pub seed: u64,
    /// Overrides the per-subsample seeds derived from `seed`.
    pub seeds: Option<Vec<u64>>,
    pub path: PathOptions,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            subsamples: 100,
            q_cap: 50,
            spec: PathSpec { count: 100, lmin_ratio: 0.05 },
            seed: 0,
            seeds: None,
            path: PathOptions {
                screen: ScreenMode::Ddpp,
                ..PathOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub subsample_count: usize,
    /// Fraction of subsamples selecting each group.
    pub selection_probability: Vec<f64>,
    /// Groups by descending probability, ties by lower index.
    pub ranking: Vec<usize>,
    /// Seed each subsample was finally drawn with.
    pub seeds: Vec<u64>,
    /// Selected groups per subsample, in order of entry.
    pub selections: Vec<Vec<usize>>,
}

/// First `q_cap` distinct groups to become nonzero along the path. Groups
/// entering at the same point are taken by descending block norm, then index.
pub fn entry_order(pm: &PathModels, partition: &GroupPartition, q_cap: usize) -> Vec<usize> {
    let mut seen = vec![false; partition.group_count()];
    let mut order = Vec::new();
    for model in &pm.models {
        let mut fresh: Vec<(usize, f64)> = model
            .support()
            .iter()
            .filter(|&&g| !seen[g])
            .map(|&g| (g, model.block(g, partition).iter().map(|v| v * v).sum::<f64>()))
            .collect();
        fresh.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (g, _) in fresh {
            if order.len() == q_cap {
                return order;
            }
            seen[g] = true;
            order.push(g);
        }
    }
    order
}

fn response_varies(y: &[f64]) -> bool {
    y.iter().any(|&v| v != y[0])
}

/// Half-sample `design` (rows without replacement), retrying with the next
/// seed while the response is constant or the path cannot be run.
fn one_subsample(design: &GroupedDesign, partition: &GroupPartition, cfg: &StabilityConfig, first_seed: u64) -> Result<(u64, Vec<usize>)> {
    let n = design.rows();
    let half = n / 2;
    let mut opts = cfg.path.clone();
    opts.spec = cfg.spec;
    opts.max_entered_groups = Some(cfg.q_cap);
    opts.progress = false;
    let mut seed = first_seed;
    for _ in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = index::sample(&mut rng, n, half).into_vec();
        rows.sort_unstable();
        let sub = design.select_rows(&rows);
        if !response_varies(sub.response()) {
            eprintln!("{}", serde_json::json!({"event": "resample", "seed": seed, "reason": "constant response"}));
            seed = seed.wrapping_add(1);
            continue;
        }
        match fedgl_core::run_path(&sub, &partition.clone().without_lipschitz(), SolverKind::Bcd, &opts) {
            Ok(pm) => return Ok((seed, entry_order(&pm, partition, cfg.q_cap))),
            Err(fedgl_core::Error::ZeroGroup(g)) => {
                eprintln!("{}", serde_json::json!({"event": "resample", "seed": seed, "reason": format!("group {g} is zero")}));
                seed = seed.wrapping_add(1);
            }
            Err(e) => return Err(e.into()),
        }
    }
    Err(PipelineError::Config(format!("no usable subsample found from seed {first_seed}")))
}

pub fn subsample_seeds(cfg: &StabilityConfig) -> Vec<u64> {
    match &cfg.seeds {
        Some(s) => s.clone(),
        None => (0..cfg.subsamples as u64).map(|b| cfg.seed.wrapping_mul(1_000_003).wrapping_add(b)).collect(),
    }
}

pub fn stability_select(design: &GroupedDesign, partition: &GroupPartition, cfg: &StabilityConfig) -> Result<StabilityReport> {
    let seeds = subsample_seeds(cfg);
    if seeds.len() < 2 {
        return Err(PipelineError::Config(format!("stability selection needs at least 2 subsamples, got {}", seeds.len())));
    }
    if design.rows() < 4 {
        return Err(PipelineError::Config("stability selection needs at least 4 rows".into()));
    }
    let runs: Vec<(u64, Vec<usize>)> = seeds
        .par_iter()
        .map(|&s| one_subsample(design, partition, cfg, s))
        .collect::<Result<_>>()?;
    let b = runs.len();
    let mut hits = vec![0usize; partition.group_count()];
    for (_, sel) in &runs {
        for &g in sel {
            hits[g] += 1;
        }
    }
    let selection_probability: Vec<f64> = hits.iter().map(|&h| h as f64 / b as f64).collect();
    let mut ranking: Vec<usize> = (0..hits.len()).collect();
    ranking.sort_by(|&a, &c| hits[c].cmp(&hits[a]).then(a.cmp(&c)));
    Ok(StabilityReport {
        subsample_count: b,
        selection_probability,
        ranking,
        seeds: runs.iter().map(|r| r.0).collect(),
        selections: runs.into_iter().map(|r| r.1).collect(),
    })
}
