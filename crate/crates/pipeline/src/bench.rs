//! Path timings for screened distributed BCD, unscreened distributed BCD and
//! ADMM on the same synthetic instance and lambda grid.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use fedgl_core::{
    generate_synthetic, shard_dataset, LocalEngine, PathModels, PathOptions, PathSpec, ScreenMode, SolverKind, SyntheticConfig,
};
use fedgl_lqm::{join_sites, spawn_in_process, DistributedEngine};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    /// Dual-projection screening with distributed BCD.
    Ddpp,
    /// Distributed BCD without screening.
    Plain,
    Admm,
}

impl BenchMode {
    pub fn name(self) -> &'static str {
        match self {
            BenchMode::Ddpp => "ddpp",
            BenchMode::Plain => "plain",
            BenchMode::Admm => "admm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ddpp" => Ok(BenchMode::Ddpp),
            "plain" => Ok(BenchMode::Plain),
            "admm" => Ok(BenchMode::Admm),
            other => Err(PipelineError::Config(format!("unknown bench mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub rows: usize,
    pub group_size: usize,
    pub active_groups: usize,
    pub snr: f64,
    pub seed: u64,
    pub spec: PathSpec,
    /// Row split across simulated sites for the distributed modes, as
    /// proportions.
    pub split: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            rows: 300,
            group_size: 20,
            active_groups: 5,
            snr: 10.0,
            seed: 1,
            spec: PathSpec::default(),
            split: vec![326, 215, 176],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub features: usize,
    pub mode: BenchMode,
    pub seconds: f64,
    pub lambdas: usize,
    pub converged: bool,
    /// Discarded groups over all groups, per lambda.
    pub rejection_rates: Vec<f64>,
    pub final_objective: f64,
}

impl BenchRow {
    pub fn mean_rejection(&self) -> f64 {
        if self.rejection_rates.is_empty() {
            0.0
        } else {
            self.rejection_rates.iter().sum::<f64>() / self.rejection_rates.len() as f64
        }
    }
}

/// Row counts proportional to `weights` that sum to `rows`.
pub fn proportional_split(rows: usize, weights: &[usize]) -> Result<Vec<usize>> {
    let total: usize = weights.iter().sum();
    if weights.is_empty() || total == 0 || rows < weights.len() {
        return Err(PipelineError::Config(format!("cannot split {rows} rows by {weights:?}")));
    }
    let mut counts: Vec<usize> = weights.iter().map(|w| (rows * w / total).max(1)).collect();
    let assigned: usize = counts.iter().sum();
    if assigned > rows {
        return Err(PipelineError::Config(format!("cannot split {rows} rows by {weights:?}")));
    }
    counts[0] += rows - assigned;
    Ok(counts)
}

fn run_mode(design: &fedgl_core::GroupedDesign, partition: &fedgl_core::GroupPartition, mode: BenchMode, cfg: &BenchConfig) -> Result<PathModels> {
    let mut opts = PathOptions {
        spec: cfg.spec,
        ..PathOptions::default()
    };
    opts.solve.seed = cfg.seed;
    match mode {
        BenchMode::Ddpp | BenchMode::Plain => {
            opts.screen = if mode == BenchMode::Ddpp { ScreenMode::Ddpp } else { ScreenMode::None };
            let counts = proportional_split(design.rows(), &cfg.split)?;
            let (session, handles) = spawn_in_process(shard_dataset(design, &counts)?);
            let mut engine = DistributedEngine::new(session, partition)?;
            let pm = fedgl_core::run_path_with(&mut engine, &opts);
            engine.session_mut().shutdown();
            drop(engine);
            join_sites(handles)?;
            Ok(pm?)
        }
        BenchMode::Admm => {
            let mut engine = LocalEngine::new(design, partition, SolverKind::Admm)?;
            Ok(fedgl_core::run_path_with(&mut engine, &opts)?)
        }
    }
}

/// Times every mode at every feature count. Rows come out grouped by
/// feature count, modes in the given order.
pub fn bench(sizes: &[usize], modes: &[BenchMode], cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &p in sizes {
        let syn = generate_synthetic(&SyntheticConfig {
            rows: cfg.rows,
            cols: p,
            group_size: cfg.group_size,
            active_groups: cfg.active_groups,
            snr: cfg.snr,
            seed: cfg.seed,
        })?;
        for &mode in modes {
            let start = Instant::now();
            let pm = run_mode(&syn.design, &syn.partition, mode, cfg)?;
            let seconds = start.elapsed().as_secs_f64();
            rows.push(BenchRow {
                features: p,
                mode,
                seconds,
                lambdas: pm.lambdas.len(),
                converged: !pm.partial,
                rejection_rates: pm.masks.iter().map(|m| m.rejection_rate()).collect(),
                final_objective: *pm.objectives.last().unwrap_or(&f64::NAN),
            });
        }
    }
    Ok(rows)
}
