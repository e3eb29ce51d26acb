//! Optional column centering and unit scaling, built from aggregated
//! column moments so a distributed run can apply the same transform.

use crate::design::{BlockView, GroupedDesign};
use crate::error::{Error, Result};
use crate::kernels;

#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub column_means: Vec<f64>,
    /// Population standard deviations; constant columns get scale 1.
    pub column_scales: Vec<f64>,
    pub response_mean: f64,
}

impl Standardization {
    /// From the aggregated output of [`kernels::column_moments`].
    pub fn from_moments(moments: &[f64], cols: usize) -> Result<Self> {
        if moments.len() != 2 * cols + 2 {
            return Err(Error::Dimension(format!("{} moments for {cols} columns", moments.len())));
        }
        let n = moments[2 * cols + 1];
        if !(n > 0.0) {
            return Err(Error::InvalidArgument("no rows to standardize".into()));
        }
        let column_means: Vec<f64> = moments[..cols].iter().map(|s| s / n).collect();
        let column_scales = (0..cols)
            .map(|j| {
                let var = (moments[cols + j] / n - column_means[j] * column_means[j]).max(0.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self {
            column_means,
            column_scales,
            response_mean: moments[2 * cols] / n,
        })
    }

    pub fn from_blocks(blocks: &[BlockView<'_>]) -> Result<Self> {
        let cols = blocks.first().map(|b| b.cols).unwrap_or(0);
        let partials: Vec<Vec<f64>> = blocks.iter().map(kernels::column_moments).collect();
        Self::from_moments(&kernels::sum_ascending(&partials)?, cols)
    }

    pub fn apply(&self, design: &mut GroupedDesign) -> Result<()> {
        let cols = design.cols();
        if cols != self.column_means.len() {
            return Err(Error::SizeMismatch {
                expected: cols,
                got: self.column_means.len(),
            });
        }
        for row in design.matrix_mut().chunks_exact_mut(cols) {
            for ((a, m), s) in row.iter_mut().zip(&self.column_means).zip(&self.column_scales) {
                *a = (*a - m) / s;
            }
        }
        for y in design.response_mut() {
            *y -= self.response_mean;
        }
        Ok(())
    }
}

/// Centers every column and the response, and scales columns to unit variance.
pub fn standardize(design: &GroupedDesign) -> Result<(GroupedDesign, Standardization)> {
    let s = Standardization::from_blocks(&[design.view()])?;
    let mut out = design.clone();
    s.apply(&mut out)?;
    Ok((out, s))
}
