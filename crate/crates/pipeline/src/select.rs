//! Frequency-based top-K selection over a regularization path.

use serde::{Deserialize, Serialize};

use fedgl_core::{GroupPartition, PathModels};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFrequency {
    /// Number of path points at which each group is nonzero.
    pub counts: Vec<usize>,
    /// `sum_k ||[x_k]_g||^2`, the tie-breaker.
    pub magnitudes: Vec<f64>,
    /// Groups by descending count, then descending magnitude, then index.
    pub ranking: Vec<usize>,
}

pub fn selection_frequency(pm: &PathModels, partition: &GroupPartition) -> SelectionFrequency {
    let g = partition.group_count();
    let mut counts = vec![0; g];
    let mut magnitudes = vec![0.0; g];
    for model in &pm.models {
        for grp in 0..g {
            let sq: f64 = model.block(grp, partition).iter().map(|v| v * v).sum();
            if sq > 0.0 {
                counts[grp] += 1;
                magnitudes[grp] += sq;
            }
        }
    }
    let mut ranking: Vec<usize> = (0..g).collect();
    ranking.sort_by(|&a, &b| {
        counts[b]
            .cmp(&counts[a])
            .then(magnitudes[b].total_cmp(&magnitudes[a]))
            .then(a.cmp(&b))
    });
    SelectionFrequency {
        counts,
        magnitudes,
        ranking,
    }
}

/// Ranks groups by how often they are nonzero along the path and returns the
/// columns of the top-ranked groups, cut at `k` columns. Groups that are
/// never nonzero are not selected.
pub fn frequency_select(pm: &PathModels, partition: &GroupPartition, k: usize) -> Result<(SelectionFrequency, Vec<usize>)> {
    if k > partition.feature_count() {
        return Err(PipelineError::Config(format!(
            "top-k {k} exceeds the {} available features",
            partition.feature_count()
        )));
    }
    let freq = selection_frequency(pm, partition);
    if k > 0 && freq.counts.iter().all(|&c| c == 0) {
        return Err(PipelineError::NothingSelected);
    }
    let mut columns = Vec::with_capacity(k);
    for &g in freq.ranking.iter().take_while(|&&g| freq.counts[g] > 0) {
        for c in partition.range(g) {
            if columns.len() == k {
                break;
            }
            columns.push(c);
        }
    }
    Ok((freq, columns))
}

/// Groups whose columns appear in `columns`, in first-appearance order.
pub fn groups_of(columns: &[usize], partition: &GroupPartition) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for &c in columns {
        if let Some(g) = partition.group_of(c) {
            if out.last() != Some(&g) && !out.contains(&g) {
                out.push(g);
            }
        }
    }
    out
}
