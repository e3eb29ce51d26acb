//! Regularization paths with warm starts, screening and KKT repair.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{self, BlockView, GroupBlock, GroupVector, GroupedDesign};
use crate::error::{Error, Result};
use crate::kernels;
use crate::partition::{make_partition, GroupPartition, WeightRule};
use crate::screening::{self, NormBound, ScreenMask, ScreenRule, ScreeningContext};
use crate::solver::{
    admm_solve_with, bcd_drive, fista_solve_with, gap_from_moments, max_group_ratio, AdmmOptions, FistaOptions, LocalBackend, Solution,
    SolveOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub count: usize,
    pub lmin_ratio: f64,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self {
            count: 100,
            lmin_ratio: 0.1,
        }
    }
}

/// `lambda_k = lambda_max (1 - k (1 - r) / (count - 1))`, `k = 0..count`.
pub fn lambda_grid(lambda_max: f64, spec: &PathSpec) -> Result<Vec<f64>> {
    if spec.count == 0 {
        return Err(Error::InvalidArgument("path needs at least one lambda".into()));
    }
    if !(spec.lmin_ratio > 0.0 && spec.lmin_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("lmin_ratio must lie in (0, 1), got {}", spec.lmin_ratio)));
    }
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda_max is {lambda_max}; the response is orthogonal to every group"
        )));
    }
    if spec.count == 1 {
        return Ok(vec![lambda_max]);
    }
    let step = (1.0 - spec.lmin_ratio) / (spec.count - 1) as f64;
    Ok((0..spec.count).map(|k| lambda_max * (1.0 - k as f64 * step)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenMode {
    #[default]
    None,
    /// Basic strong rule followed by KKT checks and re-solves.
    Strong,
    /// Sequential dual polytope projection.
    Ddpp,
}

impl ScreenMode {
    pub fn name(self) -> &'static str {
        match self {
            ScreenMode::None => "none",
            ScreenMode::Strong => "strong",
            ScreenMode::Ddpp => "ddpp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Bcd,
    Fista,
    Admm,
    Dbcd,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Bcd => "bcd",
            SolverKind::Fista => "fista",
            SolverKind::Admm => "admm",
            SolverKind::Dbcd => "dbcd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathOptions {
    pub spec: PathSpec,
    pub screen: ScreenMode,
    /// Each model stops once its gap is at most `gap_tol * (1 + |objective|)`.
    pub gap_tol: f64,
    pub solve: SolveOptions,
    /// Gap the previous model must reach for an EDPP mask to count as safe.
    pub safe_gap: f64,
    /// Stop the path once this many distinct groups have entered.
    pub max_entered_groups: Option<usize>,
    /// Line-delimited JSON progress records on stderr.
    pub progress: bool,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self {
            spec: PathSpec::default(),
            screen: ScreenMode::None,
            gap_tol: 1e-8,
            solve: SolveOptions::default(),
            safe_gap: 1e-9,
            max_entered_groups: None,
            progress: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub solver: String,
    pub screen: String,
    pub seed: u64,
    pub topology: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathModels {
    pub lambdas: Vec<f64>,
    pub models: Vec<GroupVector>,
    pub masks: Vec<ScreenMask>,
    pub gaps: Vec<f64>,
    pub objectives: Vec<f64>,
    pub converged: Vec<bool>,
    pub epochs: Vec<usize>,
    /// Groups re-admitted by the KKT check at each lambda.
    pub repairs: Vec<Vec<usize>>,
    /// Some lambda failed to converge.
    pub partial: bool,
    /// The path stopped early on `max_entered_groups`.
    pub truncated: bool,
    pub lambda_max: f64,
    pub group_sizes: Vec<usize>,
    pub provenance: Provenance,
}

/// Everything a path needs from wherever the rows live.
pub trait PathEngine {
    type Error: From<Error>;

    fn partition(&self) -> &GroupPartition;

    fn describe(&self) -> (SolverKind, String);

    fn context(&mut self) -> std::result::Result<ScreeningContext, Self::Error>;

    /// EDPP mask for `lambda_next` given the model at `lambda_prev`, plus an
    /// optional diagnostic.
    fn edpp_step(
        &mut self,
        ctx: &ScreeningContext,
        x_prev: &[f64],
        lambda_prev: f64,
        lambda_next: f64,
    ) -> std::result::Result<(ScreenMask, Option<String>), Self::Error>;

    fn solve(
        &mut self,
        lambda: f64,
        kept: &[usize],
        warm: &[f64],
        solve: &SolveOptions,
        gap_tol: f64,
    ) -> std::result::Result<Solution, Self::Error>;

    /// Full gradient `A^T (A x - y)` and the moments `[||Ax - y||^2, <Ax - y, y>]`.
    fn evaluate(&mut self, x: &[f64]) -> std::result::Result<(Vec<f64>, [f64; 2]), Self::Error>;
}

/// Single-process engine, optionally over explicit row blocks so that its
/// arithmetic matches a distributed run over the same boundaries.
pub struct LocalEngine<'a> {
    design: &'a GroupedDesign,
    partition: GroupPartition,
    row_counts: Vec<usize>,
    solver: SolverKind,
    pub fista: FistaOptions,
    pub admm: AdmmOptions,
    pub bound: NormBound,
}

impl<'a> LocalEngine<'a> {
    pub fn new(design: &'a GroupedDesign, partition: &GroupPartition, solver: SolverKind) -> Result<Self> {
        Self::with_blocks(design, partition, solver, &[design.rows()])
    }

    pub fn with_blocks(design: &'a GroupedDesign, partition: &GroupPartition, solver: SolverKind, row_counts: &[usize]) -> Result<Self> {
        design.check_partition(partition)?;
        if solver == SolverKind::Dbcd {
            return Err(Error::InvalidArgument("dbcd needs a distributed engine".into()));
        }
        let blocks = design.row_blocks(row_counts)?;
        let partition = match partition.lipschitz() {
            Some(_) => partition.clone(),
            None => partition.clone().with_lipschitz(design::lipschitz_constants(&blocks, partition)?)?,
        };
        Ok(Self {
            design,
            partition,
            row_counts: row_counts.to_vec(),
            solver,
            fista: FistaOptions::default(),
            admm: AdmmOptions::default(),
            bound: NormBound::Spectral,
        })
    }

    fn blocks(&self) -> Vec<BlockView<'a>> {
        self.design.row_blocks(&self.row_counts).expect("row counts checked at construction")
    }
}

impl PathEngine for LocalEngine<'_> {
    type Error = Error;

    fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    fn describe(&self) -> (SolverKind, String) {
        let counts: Vec<String> = self.row_counts.iter().map(|n| n.to_string()).collect();
        (self.solver, format!("local blocks [{}]", counts.join(",")))
    }

    fn context(&mut self) -> Result<ScreeningContext> {
        let norms = match self.bound {
            NormBound::Spectral => self.partition.lipschitz().ok_or(Error::MissingLipschitz)?.iter().map(|l| l.sqrt()).collect(),
            NormBound::Frobenius => design::group_frobenius_norms(self.design, &self.partition),
        };
        ScreeningContext::from_parts(design::correlation_vector(&self.blocks())?, &self.partition, norms)
    }

    fn edpp_step(&mut self, ctx: &ScreeningContext, x_prev: &[f64], lambda_prev: f64, lambda_next: f64) -> Result<(ScreenMask, Option<String>)> {
        let step = screening::edpp_screen_step_blocks(&self.blocks(), &self.partition, ctx, x_prev, lambda_prev, lambda_next)?;
        Ok((step.mask, step.diagnostic))
    }

    fn solve(&mut self, lambda: f64, kept: &[usize], warm: &[f64], solve: &SolveOptions, gap_tol: f64) -> Result<Solution> {
        match self.solver {
            SolverKind::Bcd => {
                let opts = SolveOptions {
                    gap_tol: Some(gap_tol),
                    ..solve.clone()
                };
                let mut backend = LocalBackend::new(self.blocks(), &self.partition);
                bcd_drive(&mut backend, &self.partition, lambda, kept, warm, &opts, None)
            }
            SolverKind::Fista => {
                let opts = FistaOptions {
                    tol_gap: gap_tol,
                    relative: true,
                    ..self.fista.clone()
                };
                fista_solve_with(self.design, &self.partition, lambda, kept, warm, &opts)
            }
            SolverKind::Admm => {
                let opts = AdmmOptions {
                    gap_tol: Some(gap_tol),
                    ..self.admm.clone()
                };
                admm_solve_with(self.design, &self.partition, lambda, kept, warm, &opts)
            }
            SolverKind::Dbcd => Err(Error::InvalidArgument("dbcd needs a distributed engine".into())),
        }
    }

    fn evaluate(&mut self, x: &[f64]) -> Result<(Vec<f64>, [f64; 2])> {
        let include = vec![true; self.partition.group_count()];
        let mut grads = Vec::new();
        let mut moments = Vec::new();
        for b in self.blocks() {
            let r = kernels::residual(&b, x, &self.partition);
            grads.push(kernels::transpose_mul_groups(&b, &r, &self.partition, &include));
            moments.push(vec![kernels::sq_norm(&r), kernels::dot(&r, b.response)]);
        }
        let m = kernels::sum_ascending(&moments)?;
        Ok((kernels::sum_ascending(&grads)?, [m[0], m[1]]))
    }
}

fn progress_line(record: serde_json::Value) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{record}");
}

/// A path that stopped on an error, with the lambdas finished before it.
#[derive(Debug)]
pub struct PathAbort<E> {
    pub completed: Option<PathModels>,
    pub error: E,
}

/// Runs the full path on any engine.
pub fn run_path_with<E: PathEngine>(engine: &mut E, opts: &PathOptions) -> std::result::Result<PathModels, E::Error> {
    run_path_resumable(engine, opts).map_err(|a| a.error)
}

/// Like [`run_path_with`], but a failure part way keeps the finished
/// lambdas (flagged partial) alongside the error.
pub fn run_path_resumable<E: PathEngine>(engine: &mut E, opts: &PathOptions) -> std::result::Result<PathModels, PathAbort<E::Error>> {
    let abort = |error: E::Error| PathAbort { completed: None, error };
    let (mut pm, ctx) = path_start(engine, opts).map_err(abort)?;
    let lambdas = lambda_grid(ctx.lambda_max, &opts.spec).map_err(|e| abort(e.into()))?;
    let groups = pm.group_sizes.len();
    let mut entered = vec![false; groups];
    for k in 1..lambdas.len() {
        if let Err(error) = path_step(engine, opts, &ctx, &mut pm, lambdas[k]) {
            pm.partial = true;
            return Err(PathAbort {
                completed: Some(pm),
                error,
            });
        }
        for &g in pm.models[k].support() {
            entered[g] = true;
        }
        if let Some(cap) = opts.max_entered_groups {
            if entered.iter().filter(|&&e| e).count() >= cap && k + 1 < lambdas.len() {
                pm.truncated = true;
                break;
            }
        }
    }
    Ok(pm)
}

fn path_start<E: PathEngine>(engine: &mut E, opts: &PathOptions) -> std::result::Result<(PathModels, ScreeningContext), E::Error> {
    opts.solve.validate()?;
    if !(opts.gap_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("gap_tol must be positive, got {}", opts.gap_tol)).into());
    }
    let partition = engine.partition().clone();
    let groups = partition.group_count();
    let ctx = engine.context()?;
    let lambda0 = lambda_grid(ctx.lambda_max, &opts.spec)?[0];
    let (solver, topology) = engine.describe();

    let first_mask = match opts.screen {
        ScreenMode::None => ScreenMask::keep_all(lambda0, groups),
        ScreenMode::Strong => screening::strong_rule_mask(&ctx.group_correlations, &partition, lambda0, ctx.lambda_max)?,
        ScreenMode::Ddpp => ScreenMask::discard_all(lambda0, groups, ScreenRule::Edpp),
    };
    let zero = GroupVector::zeros(&partition);
    let (_, [rsq, ry]) = engine.evaluate(zero.values())?;
    let pm = PathModels {
        lambdas: vec![lambda0],
        models: vec![zero],
        masks: vec![first_mask],
        gaps: vec![gap_from_moments(rsq, ry, 0.0, lambda0, ctx.lambda_max)],
        objectives: vec![0.5 * rsq],
        converged: vec![true],
        epochs: vec![0],
        repairs: vec![Vec::new()],
        partial: false,
        truncated: false,
        lambda_max: ctx.lambda_max,
        group_sizes: partition.sizes(),
        provenance: Provenance {
            solver: solver.name().into(),
            screen: opts.screen.name().into(),
            seed: opts.solve.seed,
            topology,
        },
    };
    if opts.progress {
        progress_line(serde_json::json!({"event": "lambda", "k": 0, "lambda": lambda0, "kept": 0, "gap": pm.gaps[0]}));
    }
    Ok((pm, ctx))
}

/// Screens, solves (re-admitting KKT violators until none remain) and
/// appends the model at `lambda`.
fn path_step<E: PathEngine>(
    engine: &mut E,
    opts: &PathOptions,
    ctx: &ScreeningContext,
    pm: &mut PathModels,
    lambda: f64,
) -> std::result::Result<(), E::Error> {
    let partition = engine.partition().clone();
    let groups = partition.group_count();
    let k = pm.lambdas.len();
    let lambda_prev = pm.lambdas[k - 1];
    let warm = pm.models[k - 1].values().to_vec();
    let mut mask = match opts.screen {
        ScreenMode::None => ScreenMask::keep_all(lambda, groups),
        ScreenMode::Strong => screening::strong_rule_mask(&ctx.group_correlations, &partition, lambda, ctx.lambda_max)?,
        ScreenMode::Ddpp => {
            let (mut mask, diagnostic) = engine.edpp_step(ctx, &warm, lambda_prev, lambda)?;
            mask.safe = mask.safe && diagnostic.is_none() && pm.gaps[k - 1] <= opts.safe_gap;
            if let (Some(d), true) = (diagnostic, opts.progress) {
                progress_line(serde_json::json!({"event": "diagnostic", "k": k, "message": d}));
            }
            mask
        }
    };
    let mut repairs = Vec::new();
    let (solution, grad, moments) = loop {
        let sol = engine.solve(lambda, &mask.kept, &warm, &opts.solve, opts.gap_tol)?;
        let (grad, moments) = engine.evaluate(sol.x.values())?;
        let violators = screening::kkt_violations_from_gradient(&grad, &partition, lambda, &mask.discarded);
        if violators.is_empty() {
            break (sol, grad, moments);
        }
        repairs.extend_from_slice(&violators);
        mask.readmit(&violators);
    };
    let all: Vec<usize> = (0..groups).collect();
    let penalty = partition.penalty(solution.x.values());
    let gap = gap_from_moments(moments[0], moments[1], penalty, lambda, max_group_ratio(&grad, &partition, &all));
    if !solution.converged {
        pm.partial = true;
    }
    if opts.progress {
        progress_line(serde_json::json!({
            "event": "lambda", "k": k, "lambda": lambda, "kept": mask.kept.len(),
            "repairs": repairs.len(), "epochs": solution.epochs_used, "gap": gap, "converged": solution.converged,
        }));
    }
    pm.lambdas.push(lambda);
    pm.objectives.push(0.5 * moments[0] + lambda * penalty);
    pm.models.push(solution.x);
    pm.masks.push(mask);
    pm.gaps.push(gap);
    pm.converged.push(solution.converged);
    pm.epochs.push(solution.epochs_used);
    pm.repairs.push(repairs);
    Ok(())
}

/// Single-node path.
pub fn run_path(design: &GroupedDesign, partition: &GroupPartition, solver: SolverKind, opts: &PathOptions) -> Result<PathModels> {
    let mut engine = LocalEngine::new(design, partition, solver)?;
    run_path_with(&mut engine, opts)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MaskRecord {
    kept: Vec<usize>,
    discarded: Vec<usize>,
    rule: ScreenRule,
    safe: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PathFile {
    lambda_max: f64,
    lambdas: Vec<f64>,
    group_sizes: Vec<usize>,
    weights: Vec<f64>,
    models: Vec<Vec<GroupBlock>>,
    masks: Vec<MaskRecord>,
    gaps: Vec<f64>,
    objectives: Vec<f64>,
    converged: Vec<bool>,
    epochs: Vec<usize>,
    repairs: Vec<Vec<usize>>,
    partial: bool,
    truncated: bool,
    provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_ids: Option<Vec<String>>,
}

impl PathModels {
    pub fn partition(&self) -> Result<GroupPartition> {
        make_partition(&self.group_sizes, &WeightRule::Unit)
    }

    /// JSON document with sparse per-lambda group blocks.
    pub fn to_json(&self, partition: &GroupPartition, feature_ids: Option<&[String]>) -> Result<String> {
        let file = PathFile {
            lambda_max: self.lambda_max,
            lambdas: self.lambdas.clone(),
            group_sizes: self.group_sizes.clone(),
            weights: partition.weights().to_vec(),
            models: self.models.iter().map(|m| m.to_blocks(partition)).collect(),
            masks: self
                .masks
                .iter()
                .map(|m| MaskRecord {
                    kept: m.kept.clone(),
                    discarded: m.discarded.clone(),
                    rule: m.rule,
                    safe: m.safe,
                })
                .collect(),
            gaps: self.gaps.clone(),
            objectives: self.objectives.clone(),
            converged: self.converged.clone(),
            epochs: self.epochs.clone(),
            repairs: self.repairs.clone(),
            partial: self.partial,
            truncated: self.truncated,
            provenance: self.provenance.clone(),
            feature_ids: feature_ids.map(|f| f.to_vec()),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses a path document; returns the models, the partition they use
    /// and any feature ids carried along.
    pub fn from_json(text: &str) -> Result<(Self, GroupPartition, Option<Vec<String>>)> {
        let f: PathFile = serde_json::from_str(text)?;
        let partition = make_partition(&f.group_sizes, &WeightRule::Explicit(f.weights.clone()))?;
        let n = f.lambdas.len();
        if [f.models.len(), f.masks.len(), f.gaps.len(), f.objectives.len(), f.converged.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::Format("path file arrays differ in length".into()));
        }
        if f.lambdas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Format("lambdas must be strictly decreasing".into()));
        }
        let models = f
            .models
            .iter()
            .map(|b| GroupVector::from_blocks(b, &partition))
            .collect::<Result<Vec<_>>>()?;
        let masks = f
            .masks
            .iter()
            .zip(&f.lambdas)
            .map(|(m, &lambda)| ScreenMask {
                lambda,
                kept: m.kept.clone(),
                discarded: m.discarded.clone(),
                rule: m.rule,
                safe: m.safe,
                margins: Vec::new(),
            })
            .collect();
        let pm = PathModels {
            lambdas: f.lambdas,
            models,
            masks,
            gaps: f.gaps,
            objectives: f.objectives,
            converged: f.converged,
            epochs: if f.epochs.len() == n { f.epochs } else { vec![0; n] },
            repairs: if f.repairs.len() == n { f.repairs } else { vec![Vec::new(); n] },
            partial: f.partial,
            truncated: f.truncated,
            lambda_max: f.lambda_max,
            group_sizes: f.group_sizes,
            provenance: f.provenance,
        };
        Ok((pm, partition, f.feature_ids))
    }

    pub fn save(&self, path: &Path, partition: &GroupPartition, feature_ids: Option<&[String]>) -> Result<()> {
        std::fs::write(path, self.to_json(partition, feature_ids)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, GroupPartition, Option<Vec<String>>)> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
