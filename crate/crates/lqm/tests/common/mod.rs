#![allow(dead_code)]

use fedgl_core::{make_partition, shard_dataset, GroupPartition, GroupedDesign, SiteShard, WeightRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct Instance {
    pub design: GroupedDesign,
    /// No Lipschitz constants: every engine computes its own, blockwise.
    pub partition: GroupPartition,
}

pub fn random_instance(seed: u64, rows: usize, cols: usize, groups: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![1usize; groups];
    for _ in 0..cols - groups {
        sizes[rng.random_range(0..groups)] += 1;
    }
    uniform_sized(seed, rows, &sizes)
}

/// Gaussian design with a sparse planted signal on the given group sizes.
pub fn uniform_sized(seed: u64, rows: usize, sizes: &[usize]) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(7));
    let cols: usize = sizes.iter().sum();
    let matrix: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
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
    Instance {
        design: GroupedDesign::new(rows, cols, matrix, response).unwrap(),
        partition: make_partition(sizes, &WeightRule::SqrtSize).unwrap(),
    }
}

pub fn identity4() -> Instance {
    let mut m = vec![0.0; 16];
    for i in 0..4 {
        m[i * 4 + i] = 1.0;
    }
    Instance {
        design: GroupedDesign::new(4, 4, m, vec![3.0, 4.0, 0.0, 0.0]).unwrap(),
        partition: make_partition(&[2, 2], &WeightRule::Unit).unwrap(),
    }
}

pub fn shards(inst: &Instance, counts: &[usize]) -> Vec<SiteShard> {
    shard_dataset(&inst.design, counts).unwrap()
}

pub fn naive_objective(d: &GroupedDesign, p: &GroupPartition, x: &[f64], lambda: f64) -> f64 {
    let mut rsq = 0.0;
    for i in 0..d.rows() {
        let fit: f64 = (0..d.cols()).map(|j| d.get(i, j) * x[j]).sum();
        rsq += (d.response()[i] - fit).powi(2);
    }
    let pen: f64 = (0..p.group_count())
        .map(|g| p.weight(g) * x[p.range(g)].iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum();
    0.5 * rsq + lambda * pen
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
