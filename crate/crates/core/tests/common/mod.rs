#![allow(dead_code)]

use fedgl_core::{attach_lipschitz, make_partition, GroupPartition, GroupedDesign, WeightRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct Instance {
    pub design: GroupedDesign,
    pub partition: GroupPartition,
}

/// Random problem with `groups` groups of random width summing to `cols`.
pub fn random_instance(seed: u64, rows: usize, cols: usize, groups: usize, rule: &WeightRule) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![1usize; groups];
    for _ in 0..cols - groups {
        sizes[rng.random_range(0..groups)] += 1;
    }
    let matrix: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    // response with planted structure plus noise, so paths have some shape
    let mut beta = vec![0.0; cols];
    for b in beta.iter_mut().take(cols / 3) {
        *b = StandardNormal.sample(&mut rng);
    }
    let response: Vec<f64> = (0..rows)
        .map(|i| {
            let s: f64 = (0..cols).map(|j| matrix[i * cols + j] * beta[j]).sum();
            let e: f64 = StandardNormal.sample(&mut rng);
            s + e
        })
        .collect();
    let design = GroupedDesign::new(rows, cols, matrix, response).unwrap();
    let partition = attach_lipschitz(&design, make_partition(&sizes, rule).unwrap()).unwrap();
    Instance { design, partition }
}

/// Instance with dimensions drawn from the ranges used throughout the suite.
pub fn random_small(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let rows = rng.random_range(20..=60);
    let groups = rng.random_range(3..=12);
    let cols = rng.random_range(groups.max(12)..=48);
    let rule = if seed.is_multiple_of(2) { WeightRule::SqrtSize } else { WeightRule::Unit };
    random_instance(seed, rows, cols, groups, &rule)
}

pub fn naive_residual(d: &GroupedDesign, x: &[f64]) -> Vec<f64> {
    (0..d.rows())
        .map(|i| d.response()[i] - (0..d.cols()).map(|j| d.get(i, j) * x[j]).sum::<f64>())
        .collect()
}

pub fn naive_correlation(d: &GroupedDesign, v: &[f64]) -> Vec<f64> {
    (0..d.cols()).map(|j| (0..d.rows()).map(|i| d.get(i, j) * v[i]).sum()).collect()
}

pub fn naive_objective(d: &GroupedDesign, p: &GroupPartition, x: &[f64], lambda: f64) -> f64 {
    let r = naive_residual(d, x);
    let mut pen = 0.0;
    for g in 0..p.group_count() {
        let mut s = 0.0;
        for j in p.range(g) {
            s += x[j] * x[j];
        }
        pen += p.weight(g) * s.sqrt();
    }
    0.5 * r.iter().map(|v| v * v).sum::<f64>() + lambda * pen
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Suppressor construction: `y` lives on the first half of the rows, the
/// last group lives on the second half and copies the first group there (plus
/// noise). The last group has zero marginal correlation with `y`, yet becomes
/// active once the first group enters, because it cancels the first group's
/// contribution on the rows where `y` is zero.
pub fn suppressor_instance(seed: u64, rows: usize, cols: usize, groups: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![1usize; groups];
    for _ in 0..cols - groups {
        sizes[rng.random_range(0..groups)] += 1;
    }
    let half = rows / 2;
    let mut matrix: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    let last = cols - sizes[groups - 1];
    for i in 0..rows {
        for (k, j) in (last..cols).enumerate() {
            matrix[i * cols + j] = if i < half {
                0.0
            } else {
                let e: f64 = StandardNormal.sample(&mut rng);
                matrix[i * cols + k % sizes[0]] * 2.0 + 0.2 * e
            };
        }
    }
    let response: Vec<f64> = (0..rows)
        .map(|i| {
            if i < half {
                let s: f64 = (0..sizes[0]).map(|j| matrix[i * cols + j]).sum();
                let e: f64 = StandardNormal.sample(&mut rng);
                3.0 * s + 0.5 * e
            } else {
                0.0
            }
        })
        .collect();
    let design = GroupedDesign::new(rows, cols, matrix, response).unwrap();
    let partition = attach_lipschitz(&design, make_partition(&sizes, &WeightRule::SqrtSize).unwrap()).unwrap();
    Instance { design, partition }
}
