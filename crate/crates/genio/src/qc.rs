//! Quality control: low-GQ calls are masked, low-MAF SNPs dropped, and the
//! remaining gaps filled with column means.

use serde::{Deserialize, Serialize};

use fedgl_core::{uniform_partition, GroupPartition, GroupedDesign, WeightRule};

use crate::error::{GenioError, Result};
use crate::vcf::{Genotype, GenotypeMatrix};

/// Folded minor allele frequency over the non-missing calls.
pub fn maf(codes: &[Genotype]) -> Result<f64> {
    let (sum, count) = codes
        .iter()
        .filter_map(|c| c.code())
        .fold((0u64, 0u64), |(s, n), c| (s + c as u64, n + 1));
    if count == 0 {
        return Err(GenioError::AllMissing);
    }
    let f = sum as f64 / (2 * count) as f64;
    Ok(f.min(1.0 - f))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QcConfig {
    pub maf_min: f64,
    pub gq_min: u32,
}

impl Default for QcConfig {
    fn default() -> Self {
        Self { maf_min: 0.05, gq_min: 45 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    LowMaf { maf: f64 },
    AllMissing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedSnp {
    /// Column index in the input.
    pub index: usize,
    pub id: String,
    pub chrom: String,
    pub pos: u64,
    #[serde(flatten)]
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub maf_min: f64,
    pub gq_min: u32,
    pub input_snps: usize,
    pub kept_snps: usize,
    /// Calls turned missing for low genotype quality.
    pub masked_calls: usize,
    /// Missing calls filled with the column mean, over kept SNPs.
    pub imputed_calls: usize,
    pub dropped: Vec<DroppedSnp>,
    /// `(rs id, imputed calls)` for kept SNPs with at least one imputation.
    pub imputed_per_snp: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcOutput {
    /// Kept SNPs with low-GQ calls masked, before imputation.
    pub genotypes: GenotypeMatrix,
    /// Samples by kept SNPs, row-major, missing calls imputed.
    pub dosages: Vec<f64>,
    pub report: QcReport,
}

impl QcOutput {
    pub fn feature_ids(&self) -> Vec<String> {
        self.genotypes.snps.iter().map(|s| s.id.clone()).collect()
    }
}

pub fn qc_filter(g: &GenotypeMatrix, cfg: &QcConfig) -> QcOutput {
    let n = g.sample_count();
    let mut masked = g.clone();
    let mut masked_calls = 0;
    for i in 0..n {
        for j in 0..g.snp_count() {
            if g.gq(i, j) < cfg.gq_min && g.call(i, j) != Genotype::Missing {
                masked.set_call(i, j, Genotype::Missing);
                masked_calls += 1;
            }
        }
    }

    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..g.snp_count() {
        let reason = match maf(&masked.column(j)) {
            Err(_) => Some(DropReason::AllMissing),
            Ok(m) if m < cfg.maf_min => Some(DropReason::LowMaf { maf: m }),
            Ok(_) => None,
        };
        match reason {
            Some(reason) => {
                let s = &g.snps[j];
                dropped.push(DroppedSnp {
                    index: j,
                    id: s.id.clone(),
                    chrom: s.chrom.clone(),
                    pos: s.pos,
                    reason,
                });
            }
            None => keep.push(j),
        }
    }

    let kept = masked.select_snps(&keep);
    let p = kept.snp_count();
    let mut dosages = vec![0.0; n * p];
    let mut imputed_per_snp = Vec::new();
    let mut imputed_calls = 0;
    for j in 0..p {
        let col = kept.column(j);
        let codes: Vec<f64> = col.iter().filter_map(|c| c.code()).map(f64::from).collect();
        let mean = codes.iter().sum::<f64>() / codes.len() as f64;
        let mut missing = 0;
        for (i, c) in col.iter().enumerate() {
            dosages[i * p + j] = match c.code() {
                Some(v) => f64::from(v),
                None => {
                    missing += 1;
                    mean
                }
            };
        }
        if missing > 0 {
            imputed_per_snp.push((kept.snps[j].id.clone(), missing));
            imputed_calls += missing;
        }
    }

    QcOutput {
        genotypes: kept,
        dosages,
        report: QcReport {
            maf_min: cfg.maf_min,
            gq_min: cfg.gq_min,
            input_snps: g.snp_count(),
            kept_snps: p,
            masked_calls,
            imputed_calls,
            dropped,
            imputed_per_snp,
        },
    }
}

/// Design over the kept SNPs in file order, grouped into consecutive runs of
/// `group_size` (the last group may be shorter).
pub fn to_design(qc: &QcOutput, response: &[f64], group_size: usize, rule: &WeightRule) -> Result<(GroupedDesign, GroupPartition)> {
    let n = qc.genotypes.sample_count();
    let p = qc.genotypes.snp_count();
    if response.len() != n {
        return Err(GenioError::Invalid(format!("response has {} values for {n} samples", response.len())));
    }
    if group_size == 0 {
        return Err(GenioError::Invalid("group size must be at least 1".into()));
    }
    if p == 0 {
        return Err(GenioError::Invalid("no SNPs left after quality control".into()));
    }
    let design = GroupedDesign::new(n, p, qc.dosages.clone(), response.to_vec())?;
    let partition = uniform_partition(p, group_size, rule)?;
    Ok((design, partition))
}
