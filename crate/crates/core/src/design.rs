//! Dense grouped design matrices, site shards, and the global quantities
//! derived from them (group correlations, `lambda_max`, group Gram matrices).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels;
use crate::linalg;
use crate::partition::GroupPartition;

/// Dense `N x P` design matrix in row-major order plus the response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDesign {
    rows: usize,
    cols: usize,
    matrix: Vec<f64>,
    response: Vec<f64>,
}

/// Borrowed view of a contiguous row block.
#[derive(Debug, Clone, Copy)]
pub struct BlockView<'a> {
    pub rows: usize,
    pub cols: usize,
    pub matrix: &'a [f64],
    pub response: &'a [f64],
}

impl GroupedDesign {
    pub fn new(rows: usize, cols: usize, matrix: Vec<f64>, response: Vec<f64>) -> Result<Self> {
        if matrix.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix has {} entries, expected {rows} x {cols}",
                matrix.len()
            )));
        }
        if response.len() != rows {
            return Err(Error::Dimension(format!(
                "response has length {}, expected {rows}",
                response.len()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response"));
        }
        Ok(Self {
            rows,
            cols,
            matrix,
            response,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.cols..(i + 1) * self.cols]
    }

    pub fn view(&self) -> BlockView<'_> {
        BlockView {
            rows: self.rows,
            cols: self.cols,
            matrix: &self.matrix,
            response: &self.response,
        }
    }

    /// Views over consecutive row blocks of the given sizes.
    pub fn row_blocks(&self, row_counts: &[usize]) -> Result<Vec<BlockView<'_>>> {
        check_row_counts(self.rows, row_counts)?;
        let mut start = 0;
        Ok(row_counts
            .iter()
            .map(|&n| {
                let v = BlockView {
                    rows: n,
                    cols: self.cols,
                    matrix: &self.matrix[start * self.cols..(start + n) * self.cols],
                    response: &self.response[start..start + n],
                };
                start += n;
                v
            })
            .collect())
    }

    /// Copy of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut matrix = Vec::with_capacity(rows.len() * self.cols);
        let mut response = Vec::with_capacity(rows.len());
        for &i in rows {
            matrix.extend_from_slice(self.row(i));
            response.push(self.response[i]);
        }
        Self {
            rows: rows.len(),
            cols: self.cols,
            matrix,
            response,
        }
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut [f64] {
        &mut self.matrix
    }

    pub(crate) fn response_mut(&mut self) -> &mut [f64] {
        &mut self.response
    }

    /// Checks that `partition` covers exactly the columns of this design.
    pub fn check_partition(&self, partition: &GroupPartition) -> Result<()> {
        if partition.feature_count() != self.cols {
            return Err(Error::SizeMismatch {
                expected: self.cols,
                got: partition.feature_count(),
            });
        }
        Ok(())
    }
}

fn check_row_counts(rows: usize, row_counts: &[usize]) -> Result<()> {
    let total: usize = row_counts.iter().sum();
    if total != rows || row_counts.is_empty() {
        return Err(Error::RowCountMismatch {
            expected: rows,
            got: total,
        });
    }
    Ok(())
}

/// One institution's private row block `(A_i, y_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteShard {
    pub site_index: usize,
    design: GroupedDesign,
}

impl SiteShard {
    pub fn new(site_index: usize, design: GroupedDesign) -> Self {
        Self { site_index, design }
    }

    pub fn local_rows(&self) -> usize {
        self.design.rows
    }

    pub fn cols(&self) -> usize {
        self.design.cols
    }

    pub fn design(&self) -> &GroupedDesign {
        &self.design
    }

    pub fn design_mut(&mut self) -> &mut GroupedDesign {
        &mut self.design
    }

    pub fn view(&self) -> BlockView<'_> {
        self.design.view()
    }
}

/// Splits the design into consecutive row blocks, one per site.
pub fn shard_dataset(design: &GroupedDesign, row_counts: &[usize]) -> Result<Vec<SiteShard>> {
    check_row_counts(design.rows, row_counts)?;
    let mut start = 0;
    let mut shards = Vec::with_capacity(row_counts.len());
    for (site, &n) in row_counts.iter().enumerate() {
        let matrix = design.matrix[start * design.cols..(start + n) * design.cols].to_vec();
        let response = design.response[start..start + n].to_vec();
        shards.push(SiteShard::new(
            site,
            GroupedDesign {
                rows: n,
                cols: design.cols,
                matrix,
                response,
            },
        ));
        start += n;
    }
    Ok(shards)
}

/// Vertical concatenation of shards.
pub fn concat_shards(shards: &[SiteShard]) -> Result<GroupedDesign> {
    let cols = shards.first().map(|s| s.cols()).unwrap_or(0);
    if shards.iter().any(|s| s.cols() != cols) {
        return Err(Error::Dimension("shards disagree on feature count".into()));
    }
    let mut matrix = Vec::new();
    let mut response = Vec::new();
    for s in shards {
        matrix.extend_from_slice(&s.design.matrix);
        response.extend_from_slice(&s.design.response);
    }
    GroupedDesign::new(response.len(), cols, matrix, response)
}

/// Length-P coefficient vector addressed by group, with its support.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupVector {
    values: Vec<f64>,
    support: Vec<usize>,
}

impl GroupVector {
    pub fn zeros(partition: &GroupPartition) -> Self {
        Self {
            values: vec![0.0; partition.feature_count()],
            support: Vec::new(),
        }
    }

    pub fn from_values(values: Vec<f64>, partition: &GroupPartition) -> Result<Self> {
        if values.len() != partition.feature_count() {
            return Err(Error::Dimension(format!(
                "coefficient vector of length {} for {} features",
                values.len(),
                partition.feature_count()
            )));
        }
        let support = (0..partition.group_count())
            .filter(|&g| values[partition.range(g)].iter().any(|&v| v != 0.0))
            .collect();
        Ok(Self { values, support })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Groups with a nonzero block, ascending.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_empty()
    }

    pub fn block<'a>(&'a self, g: usize, partition: &GroupPartition) -> &'a [f64] {
        &self.values[partition.range(g)]
    }

    /// Sparse block form, used by the path file format.
    pub fn to_blocks(&self, partition: &GroupPartition) -> Vec<GroupBlock> {
        self.support
            .iter()
            .map(|&g| GroupBlock {
                group: g,
                values: self.block(g, partition).to_vec(),
            })
            .collect()
    }

    pub fn from_blocks(blocks: &[GroupBlock], partition: &GroupPartition) -> Result<Self> {
        let mut values = vec![0.0; partition.feature_count()];
        for b in blocks {
            if b.group >= partition.group_count() || b.values.len() != partition.size(b.group) {
                return Err(Error::Format(format!("block for group {} does not match the partition", b.group)));
            }
            values[partition.range(b.group)].copy_from_slice(&b.values);
        }
        Self::from_values(values, partition)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBlock {
    pub group: usize,
    pub values: Vec<f64>,
}

/// Aggregated `A^T y` over row blocks, folded in block order.
pub fn correlation_vector(blocks: &[BlockView<'_>]) -> Result<Vec<f64>> {
    let partials: Vec<Vec<f64>> = blocks.iter().map(|b| kernels::transpose_mul(b, b.response)).collect();
    kernels::sum_ascending(&partials)
}

/// `c_g = ||[A]_g^T y||_2` for every group.
pub fn group_correlations(design: &GroupedDesign, partition: &GroupPartition) -> Result<Vec<f64>> {
    group_correlations_blocks(&[design.view()], partition)
}

pub fn group_correlations_blocks(blocks: &[BlockView<'_>], partition: &GroupPartition) -> Result<Vec<f64>> {
    if blocks.iter().any(|b| b.cols != partition.feature_count()) {
        return Err(Error::SizeMismatch {
            expected: blocks.first().map(|b| b.cols).unwrap_or(0),
            got: partition.feature_count(),
        });
    }
    Ok(partition.block_norms(&correlation_vector(blocks)?))
}

/// `max_g c_g / w_g` and the lowest group index achieving it.
pub fn lambda_max(correlations: &[f64], partition: &GroupPartition) -> Result<(f64, usize)> {
    if partition.group_count() == 0 || correlations.is_empty() {
        return Err(Error::EmptyPartition);
    }
    if correlations.len() != partition.group_count() {
        return Err(Error::Dimension(format!(
            "{} correlations for {} groups",
            correlations.len(),
            partition.group_count()
        )));
    }
    let mut best = (correlations[0] / partition.weight(0), 0);
    for (g, &c) in correlations.iter().enumerate().skip(1) {
        let ratio = c / partition.weight(g);
        if ratio > best.0 {
            best = (ratio, g);
        }
    }
    Ok(best)
}

/// `sum_i [A_i]_g^T [A_i]_g` over row blocks, folded in block order.
pub fn group_gram_blocks(blocks: &[BlockView<'_>], partition: &GroupPartition, g: usize) -> Result<Vec<f64>> {
    if g >= partition.group_count() {
        return Err(Error::InvalidArgument(format!("group {g} out of range")));
    }
    let partials: Vec<Vec<f64>> = blocks.iter().map(|b| kernels::group_gram(b, partition.range(g))).collect();
    kernels::sum_ascending(&partials)
}

pub fn group_gram(design: &GroupedDesign, partition: &GroupPartition, g: usize) -> Result<Vec<f64>> {
    group_gram_blocks(&[design.view()], partition, g)
}

/// `L_g = ||[A]_g||_2^2` for every group, from the group Gram.
pub fn lipschitz_constants(blocks: &[BlockView<'_>], partition: &GroupPartition) -> Result<Vec<f64>> {
    (0..partition.group_count())
        .map(|g| {
            let gram = group_gram_blocks(blocks, partition, g)?;
            let l = linalg::group_lipschitz(&gram, partition.size(g))?;
            if l > 0.0 {
                Ok(l)
            } else {
                Err(Error::ZeroGroup(g))
            }
        })
        .collect()
}

/// Returns `partition` with Lipschitz constants computed from `design`.
pub fn attach_lipschitz(design: &GroupedDesign, partition: GroupPartition) -> Result<GroupPartition> {
    design.check_partition(&partition)?;
    let l = lipschitz_constants(&[design.view()], &partition)?;
    partition.with_lipschitz(l)
}

/// Frobenius norm of each group block, a cheap upper bound on its spectral norm.
pub fn group_frobenius_norms(design: &GroupedDesign, partition: &GroupPartition) -> Vec<f64> {
    (0..partition.group_count())
        .map(|g| {
            let cols = partition.range(g);
            (0..design.rows)
                .map(|i| kernels::sq_norm(&design.row(i)[cols.clone()]))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}
