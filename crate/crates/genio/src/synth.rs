//! Seeded synthetic genotypes with a known set of rare SNPs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::vcf::{Genotype, GenotypeMatrix, SnpInfo};

pub struct SyntheticGenotypes {
    pub matrix: GenotypeMatrix,
    /// Columns whose folded allele frequency stays below 0.05 even after
    /// low-quality calls are masked.
    pub rare: Vec<usize>,
}

/// `samples` by `snps` genotypes. Common SNPs draw an allele frequency in
/// `[0.2, 0.5]`; a `rare_fraction` of SNPs carry a single heterozygous call.
/// About one call in ten gets a quality below 45.
pub fn synthetic_genotypes(samples: usize, snps: usize, rare_fraction: f64, seed: u64) -> SyntheticGenotypes {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut calls = vec![Genotype::HomRef; samples * snps];
    let mut gq = vec![0u32; samples * snps];
    let mut rare = Vec::new();
    for j in 0..snps {
        let is_rare = samples >= 20 && rng.random::<f64>() < rare_fraction;
        let freq: f64 = rng.random_range(0.2..0.5);
        let carrier = rng.random_range(0..samples.max(1));
        for i in 0..samples {
            let call = if is_rare {
                if i == carrier {
                    Genotype::Het
                } else {
                    Genotype::HomRef
                }
            } else {
                let alt = (rng.random::<f64>() < freq) as u8 + (rng.random::<f64>() < freq) as u8;
                Genotype::from_code(alt).unwrap()
            };
            // the rare carrier call is never masked
            let q = if rng.random::<f64>() < 0.1 && !(is_rare && i == carrier) {
                rng.random_range(0..45)
            } else {
                rng.random_range(45..100)
            };
            calls[i * snps + j] = call;
            gq[i * snps + j] = q;
        }
        if is_rare {
            rare.push(j);
        }
    }
    let samples_ids = (0..samples).map(|i| format!("S{:04}", i + 1)).collect();
    let snp_info = (0..snps)
        .map(|j| SnpInfo {
            chrom: (1 + j * 22 / snps.max(1)).to_string(),
            pos: 10_000 + 137 * j as u64,
            id: format!("rs{}", 100_000 + j),
        })
        .collect();
    SyntheticGenotypes {
        matrix: GenotypeMatrix::new(samples_ids, snp_info, calls, gq).expect("shapes agree by construction"),
        rare,
    }
}
