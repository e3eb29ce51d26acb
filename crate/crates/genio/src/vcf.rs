//! Minimal VCF subset.
//!
//! Header lines start with `#`; the `#CHROM` line, if present, names the
//! samples. Records are tab separated
//! `CHROM POS ID REF ALT QUAL FILTER INFO FORMAT sample...`, FORMAT must list
//! `GT` and `GQ`, and genotypes are one of `0/0 0/1 1/0 1/1 ./.`.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{GenioError, Result};

/// Additive genotype code: number of ALT alleles, or missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Genotype {
    HomRef,
    Het,
    HomAlt,
    Missing,
}

impl Genotype {
    pub fn code(self) -> Option<u8> {
        match self {
            Genotype::HomRef => Some(0),
            Genotype::Het => Some(1),
            Genotype::HomAlt => Some(2),
            Genotype::Missing => None,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Genotype::HomRef),
            1 => Some(Genotype::Het),
            2 => Some(Genotype::HomAlt),
            _ => None,
        }
    }

    fn parse(token: &str) -> Option<Self> {
        match token {
            "0/0" => Some(Genotype::HomRef),
            "0/1" | "1/0" => Some(Genotype::Het),
            "1/1" => Some(Genotype::HomAlt),
            "./." => Some(Genotype::Missing),
            _ => None,
        }
    }

    fn token(self) -> &'static str {
        match self {
            Genotype::HomRef => "0/0",
            Genotype::Het => "0/1",
            Genotype::HomAlt => "1/1",
            Genotype::Missing => "./.",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnpInfo {
    pub chrom: String,
    pub pos: u64,
    pub id: String,
}

/// Samples by SNPs, stored row-major (one row per sample).
#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeMatrix {
    pub samples: Vec<String>,
    pub snps: Vec<SnpInfo>,
    calls: Vec<Genotype>,
    gq: Vec<u32>,
}

impl GenotypeMatrix {
    pub fn new(samples: Vec<String>, snps: Vec<SnpInfo>, calls: Vec<Genotype>, gq: Vec<u32>) -> Result<Self> {
        let cells = samples.len() * snps.len();
        if calls.len() != cells || gq.len() != cells {
            return Err(GenioError::Invalid(format!(
                "{} samples x {} snps needs {cells} calls and qualities, got {} and {}",
                samples.len(),
                snps.len(),
                calls.len(),
                gq.len()
            )));
        }
        Ok(Self { samples, snps, calls, gq })
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn snp_count(&self) -> usize {
        self.snps.len()
    }

    pub fn call(&self, sample: usize, snp: usize) -> Genotype {
        self.calls[sample * self.snps.len() + snp]
    }

    pub fn gq(&self, sample: usize, snp: usize) -> u32 {
        self.gq[sample * self.snps.len() + snp]
    }

    pub fn set_call(&mut self, sample: usize, snp: usize, call: Genotype) {
        let p = self.snps.len();
        self.calls[sample * p + snp] = call;
    }

    pub fn column(&self, snp: usize) -> Vec<Genotype> {
        (0..self.samples.len()).map(|i| self.call(i, snp)).collect()
    }

    /// Keeps the listed SNP columns, in the given order.
    pub fn select_snps(&self, keep: &[usize]) -> Self {
        let n = self.samples.len();
        let mut calls = Vec::with_capacity(n * keep.len());
        let mut gq = Vec::with_capacity(n * keep.len());
        for i in 0..n {
            for &j in keep {
                calls.push(self.call(i, j));
                gq.push(self.gq(i, j));
            }
        }
        Self {
            samples: self.samples.clone(),
            snps: keep.iter().map(|&j| self.snps[j].clone()).collect(),
            calls,
            gq,
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> GenioError {
    GenioError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses the minimal VCF subset from a text stream.
pub fn parse_genotype_table<R: BufRead>(reader: R) -> Result<GenotypeMatrix> {
    let mut samples: Option<Vec<String>> = None;
    let mut snps = Vec::new();
    // per SNP, one (call, gq) per sample; transposed at the end
    let mut columns: Vec<Vec<(Genotype, u32)>> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if rest.starts_with("CHROM") {
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() < 9 {
                    return Err(parse_err(lineno, format!("#CHROM header has {} columns, expected at least 9", fields.len())));
                }
                samples = Some(fields[9..].iter().map(|s| s.to_string()).collect());
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 10 {
            return Err(parse_err(lineno, format!("record has {} columns, expected at least 10", fields.len())));
        }
        let expected = match &samples {
            Some(s) => 9 + s.len(),
            None => match columns.first() {
                Some(c) => 9 + c.len(),
                None => fields.len(),
            },
        };
        if fields.len() != expected {
            return Err(parse_err(lineno, format!("record has {} columns, expected {expected}", fields.len())));
        }
        let pos: u64 = fields[1].parse().map_err(|_| parse_err(lineno, format!("bad position {:?}", fields[1])))?;
        if fields[4].contains(',') {
            return Err(parse_err(lineno, format!("multi-allelic ALT {:?} is not supported", fields[4])));
        }
        let format: Vec<&str> = fields[8].split(':').collect();
        let gt_at = format.iter().position(|k| *k == "GT").ok_or_else(|| parse_err(lineno, "FORMAT lacks GT"))?;
        let gq_at = format.iter().position(|k| *k == "GQ").ok_or_else(|| parse_err(lineno, "FORMAT lacks GQ"))?;
        let mut column = Vec::with_capacity(fields.len() - 9);
        for (s, field) in fields[9..].iter().enumerate() {
            let parts: Vec<&str> = field.split(':').collect();
            let gt_token = parts.get(gt_at).copied().unwrap_or("");
            let gt = Genotype::parse(gt_token).ok_or_else(|| parse_err(lineno, format!("sample {}: unknown GT {gt_token:?}", s + 1)))?;
            let gq = match parts.get(gq_at).copied() {
                Some(".") => 0,
                Some(t) => t.parse::<u32>().map_err(|_| parse_err(lineno, format!("sample {}: bad GQ {t:?}", s + 1)))?,
                None => return Err(parse_err(lineno, format!("sample {}: no GQ value", s + 1))),
            };
            column.push((gt, gq));
        }
        snps.push(SnpInfo {
            chrom: fields[0].to_string(),
            pos,
            id: fields[2].to_string(),
        });
        columns.push(column);
    }
    let n = match (&samples, columns.first()) {
        (Some(s), _) => s.len(),
        (None, Some(c)) => c.len(),
        (None, None) => 0,
    };
    let samples = samples.unwrap_or_else(|| (1..=n).map(|i| format!("sample{i}")).collect());
    let p = columns.len();
    let mut calls = vec![Genotype::Missing; n * p];
    let mut gq = vec![0; n * p];
    for (j, col) in columns.into_iter().enumerate() {
        for (i, (c, q)) in col.into_iter().enumerate() {
            calls[i * p + j] = c;
            gq[i * p + j] = q;
        }
    }
    GenotypeMatrix::new(samples, snps, calls, gq)
}

/// Opens a plain or gzip-compressed genotype file and parses it.
pub fn open_genotype_file(path: &Path) -> Result<GenotypeMatrix> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    let file = File::open(path)?;
    if n == 2 && magic == [0x1f, 0x8b] {
        parse_genotype_table(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        parse_genotype_table(BufReader::new(file))
    }
}

/// Writes the matrix in the same subset the parser reads.
pub fn write_genotype_table<W: Write>(g: &GenotypeMatrix, mut out: W) -> Result<()> {
    writeln!(out, "##fileformat=VCFv4.2")?;
    writeln!(out, "##FORMAT=<ID=GT,Number=1,Type=String,Description=\"Genotype\">")?;
    writeln!(out, "##FORMAT=<ID=GQ,Number=1,Type=Integer,Description=\"Genotype Quality\">")?;
    write!(out, "#CHROM\tPOS\tID\tREF\tALT\tQUAL\tFILTER\tINFO\tFORMAT")?;
    for s in &g.samples {
        write!(out, "\t{s}")?;
    }
    writeln!(out)?;
    for (j, snp) in g.snps.iter().enumerate() {
        write!(out, "{}\t{}\t{}\tA\tG\t.\tPASS\t.\tGT:GQ", snp.chrom, snp.pos, snp.id)?;
        for i in 0..g.samples.len() {
            write!(out, "\t{}:{}", g.call(i, j).token(), g.gq(i, j))?;
        }
        writeln!(out)?;
    }
    Ok(())
}
