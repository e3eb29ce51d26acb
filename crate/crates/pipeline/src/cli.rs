//! Command-line surface of the `fedgl` binary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use fedgl_core::io::{load_dataset, save_dataset, Sidecar};
use fedgl_core::{
    generate_synthetic, shard_dataset, LocalEngine, PathModels, PathOptions, PathSpec, ScreenMode, SolverKind, SyntheticConfig, WeightRule,
};
use fedgl_genio::{open_genotype_file, qc_filter, to_design, QcConfig};
use fedgl_lqm::{connect_tcp, join_sites, serve_tcp_once, spawn_in_process, DistributedEngine, MasterPlan};

use crate::bench::{bench, BenchConfig, BenchMode};
use crate::error::{PipelineError, Result};
use crate::output;
use crate::select::frequency_select;
use crate::stability::{stability_select, StabilityConfig};

#[derive(Debug, Parser)]
#[command(name = "fedgl", version, about = "Federated group Lasso feature selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted group-sparse dataset.
    Synth(SynthArgs),
    /// Turn a VCF file into a dataset after quality control.
    Ingest(IngestArgs),
    /// Fit a regularization path.
    Path(PathArgs),
    /// Serve shards of a dataset as TCP sites.
    Sites(SitesArgs),
    /// Run a path against remote sites.
    Master(MasterArgs),
    /// Top-K selection by nonzero frequency along a path.
    Select(SelectArgs),
    /// Stability selection by half-sampling.
    Stability(StabilityArgs),
    /// Time screened and unscreened solvers.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScreenArg {
    None,
    Strong,
    Ddpp,
}

impl From<ScreenArg> for ScreenMode {
    fn from(s: ScreenArg) -> Self {
        match s {
            ScreenArg::None => ScreenMode::None,
            ScreenArg::Strong => ScreenMode::Strong,
            ScreenArg::Ddpp => ScreenMode::Ddpp,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverArg {
    Bcd,
    Fista,
    Admm,
    Dbcd,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Bcd => SolverKind::Bcd,
            SolverArg::Fista => SolverKind::Fista,
            SolverArg::Admm => SolverKind::Admm,
            SolverArg::Dbcd => SolverKind::Dbcd,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightArg {
    Unit,
    SqrtSize,
}

impl From<WeightArg> for WeightRule {
    fn from(w: WeightArg) -> Self {
        match w {
            WeightArg::Unit => WeightRule::Unit,
            WeightArg::SqrtSize => WeightRule::SqrtSize,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 10_000)]
    pub p: usize,
    #[arg(long, default_value_t = 20)]
    pub group_size: usize,
    #[arg(long, default_value_t = 5)]
    pub active: usize,
    /// Signal-to-noise ratio; `inf` for noiseless data.
    #[arg(long, default_value_t = 10.0)]
    pub snr: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Plain or gzip-compressed VCF.
    #[arg(long)]
    pub vcf: PathBuf,
    /// Phenotype file: one value per line in sample order, or `sample,value` lines.
    #[arg(long)]
    pub response: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub maf: f64,
    #[arg(long, default_value_t = 45)]
    pub gq: u32,
    #[arg(long, default_value_t = 20)]
    pub group_size: usize,
    #[arg(long, value_enum, default_value_t = WeightArg::SqrtSize)]
    pub weight_rule: WeightArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PathArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub lambdas: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lmin_ratio: f64,
    #[arg(long, value_enum, default_value_t = ScreenArg::Ddpp)]
    pub screen: ScreenArg,
    #[arg(long, value_enum, default_value_t = SolverArg::Bcd)]
    pub solver: SolverArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    pub gap_tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_epochs: usize,
    /// Row counts per simulated site for `--solver dbcd` (default: three near-equal shards).
    #[arg(long, value_delimiter = ',')]
    pub split: Option<Vec<usize>>,
    /// Emit per-lambda progress records on stderr.
    #[arg(long)]
    pub progress: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SitesArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Row counts per site, in order.
    #[arg(long, value_delimiter = ',', required = true)]
    pub split: Vec<usize>,
    /// Site `i` listens on `listen-base + i`.
    #[arg(long)]
    pub listen_base: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

#[derive(Debug, Args)]
pub struct MasterArgs {
    /// `host:port` of each site, in site order.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sites: Vec<String>,
    /// JSON plan: group sizes, weights and path settings.
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub top_k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub subsamples: usize,
    #[arg(long, default_value_t = 50)]
    pub q_cap: usize,
    #[arg(long, default_value_t = 100)]
    pub lambdas: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lmin_ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "10000,50000")]
    pub p_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "ddpp,plain,admm")]
    pub modes: Vec<String>,
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub lambdas: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lmin_ratio: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Ground truth written next to a synthetic dataset.
#[derive(Debug, Serialize, Deserialize)]
pub struct Truth {
    pub config: SyntheticConfig,
    pub planted: Vec<usize>,
    pub coefficients: Vec<f64>,
}

pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Path(a) => path(a),
        Command::Sites(a) => sites(a),
        Command::Master(a) => master(a),
        Command::Select(a) => select(a),
        Command::Stability(a) => stability(a),
        Command::Bench(a) => bench_cmd(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let config = SyntheticConfig {
        rows: a.n,
        cols: a.p,
        group_size: a.group_size,
        active_groups: a.active,
        snr: a.snr,
        seed: a.seed,
    };
    let syn = generate_synthetic(&config)?;
    save_dataset(&a.out, &syn.design, &Sidecar::new(syn.partition.sizes(), &WeightRule::SqrtSize, None))?;
    let truth = Truth {
        config,
        planted: syn.planted,
        coefficients: syn.coefficients,
    };
    std::fs::write(with_suffix(&a.out, ".truth.json"), serde_json::to_string_pretty(&truth)?)?;
    Ok(())
}

/// Reads one value per sample, either bare or as `sample,value`.
pub fn read_response(path: &Path, samples: &[String]) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_path(path)?;
    let mut bare = Vec::new();
    let mut keyed = std::collections::HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let (key, value) = match rec.len() {
            1 => (None, &rec[0]),
            2 => (Some(rec[0].to_string()), &rec[1]),
            n => return Err(PipelineError::Config(format!("response line {}: {n} fields", i + 1))),
        };
        let v: f64 = match value.parse() {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(_) => return Err(PipelineError::Config(format!("response line {}: bad value {value:?}", i + 1))),
        };
        match key {
            Some(k) => {
                keyed.insert(k, v);
            }
            None => bare.push(v),
        }
    }
    if !keyed.is_empty() {
        samples
            .iter()
            .map(|s| keyed.get(s).copied().ok_or_else(|| PipelineError::Config(format!("no response for sample {s}"))))
            .collect()
    } else if bare.len() == samples.len() {
        Ok(bare)
    } else {
        Err(PipelineError::Config(format!("{} response values for {} samples", bare.len(), samples.len())))
    }
}

fn ingest(a: IngestArgs) -> Result<()> {
    let g = open_genotype_file(&a.vcf)?;
    let response = read_response(&a.response, &g.samples)?;
    let qc = qc_filter(&g, &QcConfig { maf_min: a.maf, gq_min: a.gq });
    let rule: WeightRule = a.weight_rule.into();
    let (design, partition) = to_design(&qc, &response, a.group_size, &rule)?;
    save_dataset(&a.out, &design, &Sidecar::new(partition.sizes(), &rule, Some(qc.feature_ids())))?;
    std::fs::write(with_suffix(&a.out, ".qc.json"), serde_json::to_string_pretty(&qc.report)?)?;
    eprintln!(
        "{}",
        serde_json::json!({"event": "ingest", "samples": design.rows(), "kept_snps": qc.report.kept_snps, "dropped": qc.report.dropped.len()})
    );
    Ok(())
}

fn equal_split(rows: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| rows / parts + usize::from(i < rows % parts)).collect()
}

fn path(a: PathArgs) -> Result<()> {
    let (design, sidecar) = load_dataset(&a.data)?;
    let partition = sidecar.partition()?;
    let mut opts = PathOptions {
        spec: PathSpec {
            count: a.lambdas,
            lmin_ratio: a.lmin_ratio,
        },
        screen: a.screen.into(),
        gap_tol: a.gap_tol,
        progress: a.progress,
        ..PathOptions::default()
    };
    opts.solve.seed = a.seed;
    opts.solve.max_epochs = a.max_epochs;
    let pm = match SolverKind::from(a.solver) {
        SolverKind::Dbcd => {
            let split = a.split.clone().unwrap_or_else(|| equal_split(design.rows(), 3.min(design.rows()).max(1)));
            let (session, handles) = spawn_in_process(shard_dataset(&design, &split)?);
            let mut engine = DistributedEngine::new(session, &partition)?;
            let pm = fedgl_core::run_path_with(&mut engine, &opts);
            engine.session_mut().shutdown();
            drop(engine);
            join_sites(handles)?;
            pm?
        }
        solver => {
            let mut engine = LocalEngine::new(&design, &partition, solver)?;
            fedgl_core::run_path_with(&mut engine, &opts)?
        }
    };
    finish_path(&pm, &partition, sidecar.feature_ids.as_deref(), &a.out)
}

fn finish_path(pm: &PathModels, partition: &fedgl_core::GroupPartition, ids: Option<&[String]>, out: &Path) -> Result<()> {
    pm.save(out, partition, ids)?;
    if pm.partial {
        let bad = pm.converged.iter().filter(|c| !**c).count();
        return Err(PipelineError::NotConverged(format!("{bad} lambda values did not reach the gap tolerance")));
    }
    Ok(())
}

fn sites(a: SitesArgs) -> Result<()> {
    let (design, _) = load_dataset(&a.data)?;
    let shards = shard_dataset(&design, &a.split)?;
    let mut handles = Vec::new();
    for (i, shard) in shards.into_iter().enumerate() {
        let port = a
            .listen_base
            .checked_add(i as u16)
            .ok_or_else(|| PipelineError::Config("port range overflows".into()))?;
        let listener = TcpListener::bind((a.host.as_str(), port))?;
        eprintln!("{}", serde_json::json!({"event": "listening", "site": i, "addr": listener.local_addr()?.to_string()}));
        handles.push(std::thread::spawn(move || serve_tcp_once(listener, i as u16, shard)));
    }
    join_sites(handles)?;
    Ok(())
}

fn master(a: MasterArgs) -> Result<()> {
    let plan: MasterPlan = serde_json::from_str(&std::fs::read_to_string(&a.plan)?)?;
    let partition = plan.partition().map_err(|e| PipelineError::Config(e.to_string()))?;
    let session = connect_tcp(&a.sites, Duration::from_secs(a.timeout_secs))?.with_timeout(Duration::from_secs(a.timeout_secs));
    match fedgl_lqm::run_master(session, &plan) {
        Ok(pm) => finish_path(&pm, &partition, None, &a.out),
        Err(abort) => {
            if let Some(done) = &abort.completed {
                done.save(&a.out, &partition, None)?;
            }
            Err(abort.error.into())
        }
    }
}

fn select(a: SelectArgs) -> Result<()> {
    let (pm, partition, ids) = PathModels::load(&a.models)?;
    let (freq, columns) = frequency_select(&pm, &partition, a.top_k)?;
    let mut w = create(&a.out)?;
    output::write_selection(&mut w, &freq, &partition, &columns, ids.as_deref())?;
    w.flush()?;
    Ok(())
}

fn stability(a: StabilityArgs) -> Result<()> {
    let (design, sidecar) = load_dataset(&a.data)?;
    let partition = sidecar.partition()?;
    let cfg = StabilityConfig {
        subsamples: a.subsamples,
        q_cap: a.q_cap,
        spec: PathSpec {
            count: a.lambdas,
            lmin_ratio: a.lmin_ratio,
        },
        seed: a.seed,
        ..StabilityConfig::default()
    };
    let report = stability_select(&design, &partition, &cfg)?;
    let mut w = create(&a.out)?;
    output::write_stability(&mut w, &report, &partition, sidecar.feature_ids.as_deref())?;
    w.flush()?;
    Ok(())
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let modes = a.modes.iter().map(|m| BenchMode::parse(m)).collect::<Result<Vec<_>>>()?;
    let cfg = BenchConfig {
        rows: a.n,
        seed: a.seed,
        spec: PathSpec {
            count: a.lambdas,
            lmin_ratio: a.lmin_ratio,
        },
        ..BenchConfig::default()
    };
    let rows = bench(&a.p_list, &modes, &cfg)?;
    match &a.out {
        Some(p) => {
            let mut w = create(p)?;
            output::write_bench(&mut w, &rows)?;
            w.flush()?;
        }
        None => output::write_bench(std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}
