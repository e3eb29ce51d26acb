//! Contiguous, non-overlapping column groups with per-group penalty weights.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How group penalty weights are assigned.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// `w_g = 1` for every group.
    Unit,
    /// `w_g = sqrt(p_g)`.
    #[default]
    SqrtSize,
    Explicit(Vec<f64>),
}

impl WeightRule {
    pub fn name(&self) -> &'static str {
        match self {
            WeightRule::Unit => "unit",
            WeightRule::SqrtSize => "sqrt_size",
            WeightRule::Explicit(_) => "explicit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition {
    starts: Vec<usize>,
    features: usize,
    weights: Vec<f64>,
    lipschitz: Option<Vec<f64>>,
}

/// Builds a partition of `sum(group_sizes)` columns into consecutive groups.
pub fn make_partition(group_sizes: &[usize], weight_rule: &WeightRule) -> Result<GroupPartition> {
    if group_sizes.is_empty() {
        return Err(Error::EmptyPartition);
    }
    let mut starts = Vec::with_capacity(group_sizes.len());
    let mut next = 0usize;
    for (g, &size) in group_sizes.iter().enumerate() {
        if size == 0 {
            return Err(Error::EmptyGroup(g));
        }
        starts.push(next);
        next += size;
    }
    let weights = match weight_rule {
        WeightRule::Unit => vec![1.0; group_sizes.len()],
        WeightRule::SqrtSize => group_sizes.iter().map(|&s| (s as f64).sqrt()).collect(),
        WeightRule::Explicit(w) => {
            if w.len() != group_sizes.len() {
                return Err(Error::WeightCount {
                    expected: group_sizes.len(),
                    got: w.len(),
                });
            }
            if let Some((group, &value)) = w.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v.is_finite())) {
                return Err(Error::NonPositiveWeight { group, value });
            }
            w.clone()
        }
    };
    Ok(GroupPartition {
        starts,
        features: next,
        weights,
        lipschitz: None,
    })
}

/// Fixed-width groups over `features` columns; the last group takes the remainder.
pub fn uniform_partition(features: usize, group_size: usize, weight_rule: &WeightRule) -> Result<GroupPartition> {
    if group_size == 0 {
        return Err(Error::InvalidArgument("group size must be at least 1".into()));
    }
    let mut sizes = vec![group_size; features / group_size];
    if !features.is_multiple_of(group_size) {
        sizes.push(features % group_size);
    }
    make_partition(&sizes, weight_rule)
}

impl GroupPartition {
    pub fn group_count(&self) -> usize {
        self.starts.len()
    }

    pub fn feature_count(&self) -> usize {
        self.features
    }

    /// Start column of every group.
    pub fn offsets(&self) -> &[usize] {
        &self.starts
    }

    pub fn range(&self, g: usize) -> Range<usize> {
        let end = self.starts.get(g + 1).copied().unwrap_or(self.features);
        self.starts[g]..end
    }

    pub fn size(&self, g: usize) -> usize {
        self.range(g).len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        (0..self.group_count()).map(|g| self.size(g)).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, g: usize) -> f64 {
        self.weights[g]
    }

    pub fn lipschitz(&self) -> Option<&[f64]> {
        self.lipschitz.as_deref()
    }

    /// The group that owns column `col`.
    pub fn group_of(&self, col: usize) -> Option<usize> {
        if col >= self.features {
            return None;
        }
        Some(self.starts.partition_point(|&s| s <= col) - 1)
    }

    /// Attaches per-group Lipschitz constants `L_g = ||[A]_g||_2^2`.
    pub fn with_lipschitz(mut self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.group_count() {
            return Err(Error::Dimension(format!(
                "{} lipschitz constants for {} groups",
                values.len(),
                self.group_count()
            )));
        }
        if let Some(g) = values.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::ZeroGroup(g));
        }
        self.lipschitz = Some(values);
        Ok(self)
    }

    pub fn without_lipschitz(mut self) -> Self {
        self.lipschitz = None;
        self
    }

    /// Euclidean norm of every group block of a length-P vector.
    pub fn block_norms(&self, v: &[f64]) -> Vec<f64> {
        (0..self.group_count())
            .map(|g| crate::kernels::norm(&v[self.range(g)]))
            .collect()
    }

    /// `sum_g w_g ||[x]_g||_2`.
    pub fn penalty(&self, x: &[f64]) -> f64 {
        (0..self.group_count())
            .map(|g| self.weights[g] * crate::kernels::norm(&x[self.range(g)]))
            .sum()
    }

    /// Indicator vector over groups, the wire form of a group set.
    pub fn indicator(&self, groups: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.group_count()];
        for &g in groups {
            out[g] = 1.0;
        }
        out
    }
}
