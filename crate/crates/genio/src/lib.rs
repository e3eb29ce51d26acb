//! Genotype ingestion: a parser for a minimal VCF subset, additive SNP
//! coding, MAF/GQ quality control and conversion to a grouped design.

pub mod error;
pub mod qc;
pub mod synth;
pub mod vcf;

pub use error::{GenioError, Result};
pub use qc::{maf, qc_filter, to_design, DropReason, DroppedSnp, QcConfig, QcOutput, QcReport};
pub use synth::{synthetic_genotypes, SyntheticGenotypes};
pub use vcf::{open_genotype_file, parse_genotype_table, write_genotype_table, Genotype, GenotypeMatrix, SnpInfo};
