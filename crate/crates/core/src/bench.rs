//! Multi-seed experiment harness: configs, per-seed training runs, aggregate
//! statistics and CSV/JSON exports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MsnError, Result};
use crate::network::{
    match_mlp_width, mlp_param_count, MlpArch, MlpNetwork, MsnArch, MsnNetwork, Network,
};
use crate::powbasis::{ExponentMode, DEFAULT_MARGIN};
use crate::problems::{equispaced, sample_boundary, sample_collocation, PinnProblem, RegressionTask, TaskName};
use crate::theory;
use crate::training::{exponents_csv, rmse, trace_csv, train, LossBreakdown, Objective, TrainConfig};

pub const SCHEMA_VERSION: u32 = 1;
/// Hidden width of the large MLP baseline (two hidden layers).
pub const MLP_BIG_WIDTH: usize = 64;
pub const SOLUTION_GRID: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Supervised { task: TaskName },
    PinnSqrt,
    PinnBl { eps_stiff: f64 },
    Landscape,
    OracleCheck,
    GapTable,
}

impl Experiment {
    pub fn label(&self) -> String {
        match self {
            Experiment::Supervised { task } => format!("supervised_{task}"),
            Experiment::PinnSqrt => "pinn_sqrt".into(),
            Experiment::PinnBl { eps_stiff } => format!("pinn_bl_{eps_stiff}"),
            Experiment::Landscape => "landscape".into(),
            Experiment::OracleCheck => "oracle_check".into(),
            Experiment::GapTable => "gap_table".into(),
        }
    }

    pub fn is_theory(&self) -> bool {
        matches!(
            self,
            Experiment::Landscape | Experiment::OracleCheck | Experiment::GapTable
        )
    }

    /// Hidden width of the default MSN for this experiment.
    pub fn default_msn_width(&self) -> usize {
        match self {
            Experiment::Supervised { task: TaskName::Cusp } => 56,
            Experiment::PinnSqrt | Experiment::PinnBl { .. } => 32,
            _ => 16,
        }
    }

    /// Exponent cap of the default MSN.
    pub fn default_p_max(&self) -> f64 {
        match self {
            Experiment::PinnSqrt | Experiment::PinnBl { .. } => 3.0,
            _ => 2.0,
        }
    }

    pub fn default_train(&self) -> TrainConfig {
        match self {
            Experiment::Supervised { .. } => TrainConfig::supervised(),
            // exponents need to move further on the PINN problems
            Experiment::PinnSqrt | Experiment::PinnBl { .. } => TrainConfig {
                exp_lr_multiplier: 0.1,
                exp_grad_clip: Some(0.1),
                ..TrainConfig::default()
            },
            _ => TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Msn {
        mode: ExponentMode,
        k_even: usize,
        k_odd: usize,
        p_max: f64,
        /// Hidden layer widths.
        hidden: Vec<usize>,
    },
    MlpBig,
    /// Two-hidden-layer MLP sized to the given parameter budget.
    MlpMatched { target_params: usize },
}

impl ModelSpec {
    /// Single-hidden-layer MSN with 6 even and 6 odd terms per edge.
    pub fn msn(width: usize, p_max: f64) -> Self {
        ModelSpec::Msn {
            mode: ExponentMode::Bounded,
            k_even: 6,
            k_odd: 6,
            p_max,
            hidden: vec![width],
        }
    }

    /// The default MSN for `experiment`.
    pub fn default_msn(experiment: &Experiment) -> Self {
        Self::msn(experiment.default_msn_width(), experiment.default_p_max())
    }

    /// Named preset for `experiment`: `msn`, `msn-cumsum`, `mlp-big` or
    /// `mlp-matched` (matched to that experiment's default MSN).
    pub fn preset(name: &str, experiment: &Experiment) -> Result<Self> {
        match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "msn" => Ok(Self::default_msn(experiment)),
            "msn-cumsum" => {
                let mut m = Self::default_msn(experiment);
                if let ModelSpec::Msn { mode, .. } = &mut m {
                    *mode = ExponentMode::Cumsum;
                }
                Ok(m)
            }
            "mlp-big" => Ok(ModelSpec::MlpBig),
            "mlp-matched" => Ok(ModelSpec::MlpMatched {
                target_params: Self::default_msn(experiment).param_count()?,
            }),
            other => Err(MsnError::InvalidConfig(format!("unknown model '{other}'"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            ModelSpec::Msn { mode, hidden, .. } => {
                let widths: Vec<String> = hidden.iter().map(|h| h.to_string()).collect();
                let suffix = match mode {
                    ExponentMode::Bounded => "",
                    ExponentMode::Cumsum => "_cumsum",
                };
                format!("msn{suffix}_{}", widths.join("x"))
            }
            ModelSpec::MlpBig => "mlp_big".into(),
            ModelSpec::MlpMatched { target_params } => format!("mlp_matched_{target_params}"),
        }
    }

    fn msn_arch(&self) -> Option<MsnArch> {
        match self {
            ModelSpec::Msn {
                mode,
                k_even,
                k_odd,
                p_max,
                hidden,
            } => {
                let mut dims = vec![1];
                dims.extend(hidden);
                dims.push(1);
                Some(MsnArch {
                    dims,
                    k_even: *k_even,
                    k_odd: *k_odd,
                    p_max: *p_max,
                    margin: DEFAULT_MARGIN,
                    mode: *mode,
                })
            }
            _ => None,
        }
    }

    fn mlp_dims(&self) -> Result<Option<Vec<usize>>> {
        let width = match self {
            ModelSpec::Msn { .. } => return Ok(None),
            ModelSpec::MlpBig => MLP_BIG_WIDTH,
            ModelSpec::MlpMatched { target_params } => match_mlp_width(*target_params, 2, 1, 1)?,
        };
        Ok(Some(vec![1, width, width, 1]))
    }

    pub fn param_count(&self) -> Result<usize> {
        if let Some(arch) = self.msn_arch() {
            arch.validate()?;
            return Ok(arch.param_count());
        }
        let dims = self.mlp_dims()?.expect("mlp spec");
        Ok(mlp_param_count(1, dims[1], 2, 1))
    }

    /// Fresh network initialised from `seed`.
    pub fn build(&self, seed: u64) -> Result<Network> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Some(arch) = self.msn_arch() {
            return Ok(Network::Msn(MsnNetwork::init(arch, &mut rng)?));
        }
        let dims = self.mlp_dims()?.expect("mlp spec");
        Ok(Network::Mlp(MlpNetwork::init(MlpArch { dims }, &mut rng)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub n_collocation: usize,
    pub n_boundary: usize,
    /// Points per axis for landscape and oracle-check grids.
    pub grid_size: usize,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment,
            model: ModelSpec::default_msn(&experiment),
            train: experiment.default_train(),
            seeds: vec![0, 1, 2],
            output_dir: None,
            n_collocation: 2048,
            n_boundary: 256,
            grid_size: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(MsnError::InvalidConfig(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.experiment.is_theory() {
            if self.grid_size < 2 {
                return Err(MsnError::InvalidConfig("grid_size must be at least 2".into()));
            }
            return Ok(());
        }
        if self.seeds.is_empty() {
            return Err(MsnError::InvalidConfig("at least one seed is required".into()));
        }
        if let Experiment::PinnBl { eps_stiff } = self.experiment {
            PinnProblem::boundary_layer(eps_stiff)?;
        }
        if self.n_collocation == 0 || self.n_boundary == 0 {
            return Err(MsnError::InvalidConfig("point counts must be positive".into()));
        }
        self.model.param_count()?;
        self.train.validate()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerExponentValues {
    pub even: Vec<f64>,
    pub odd: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// `None` when the run diverged.
    pub rmse: Option<f64>,
    pub final_exponents: Vec<LayerExponentValues>,
    pub param_count: usize,
    pub nan_flag: bool,
    pub steps_run: usize,
    pub final_loss: Option<LossBreakdown>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rmse_mean: Option<f64>,
    /// Sample standard deviation over finite seeds (0 for a single seed).
    pub rmse_std: Option<f64>,
    pub params: usize,
}

impl Aggregate {
    pub fn from_seeds(per_seed: &[SeedResult], params: usize) -> Self {
        let ok: Vec<f64> = per_seed.iter().filter_map(|s| s.rmse).collect();
        if ok.is_empty() {
            return Self {
                rmse_mean: None,
                rmse_std: None,
                params,
            };
        }
        let n = ok.len() as f64;
        let mean = ok.iter().sum::<f64>() / n;
        let std = if ok.len() > 1 {
            (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            rmse_mean: Some(mean),
            rmse_std: Some(std),
            params,
        }
    }
}

/// Summary of a theory-only experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryOutcome {
    pub passed: bool,
    pub max_abs_diff: Option<f64>,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub experiment: String,
    pub model: Option<String>,
    pub per_seed: Vec<SeedResult>,
    pub aggregate: Aggregate,
    /// Seeds left out of the aggregate because they diverged.
    pub exclusions: usize,
    pub theory: Option<TheoryOutcome>,
    pub config_echo: ExperimentConfig,
}

impl ExperimentResult {
    pub fn all_diverged(&self) -> bool {
        !self.per_seed.is_empty() && self.per_seed.iter().all(|s| s.nan_flag)
    }

    pub fn passed(&self) -> bool {
        self.theory.as_ref().is_none_or(|t| t.passed)
    }
}

/// Everything a single seed produces.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub result: SeedResult,
    pub trace_csv: String,
    pub exponents_csv: String,
    pub solution_csv: String,
    pub network: Network,
}

fn data_seed(seed: u64) -> u64 {
    seed ^ 0x5eed_da7a_0000_0000
}

/// Train one seed of `config` and evaluate it on the dense grid.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let mut net = config.model.build(seed)?;
    let mut train_cfg = config.train.clone();
    train_cfg.seed = seed;
    let (objective, grid, exact): (Objective, Vec<f64>, Box<dyn Fn(f64) -> f64>) = match config.experiment {
        Experiment::Supervised { task } => {
            let task = RegressionTask::new(task);
            let obj = Objective::supervised(task.training_set(data_seed(seed)))?;
            (obj, task.test_grid(), Box::new(move |x| task.target(x)))
        }
        Experiment::PinnSqrt | Experiment::PinnBl { .. } => {
            let problem = match config.experiment {
                Experiment::PinnBl { eps_stiff } => PinnProblem::boundary_layer(eps_stiff)?,
                _ => PinnProblem::SqrtOde,
            };
            let col = sample_collocation(&problem, config.n_collocation, data_seed(seed))?;
            let bnd = sample_boundary(&problem, config.n_boundary.max(problem.boundary_conditions().len()))?;
            let obj = Objective::pinn(problem, col, &bnd)?;
            (obj, equispaced(0.0, 1.0, SOLUTION_GRID), Box::new(move |x| problem.exact(x)))
        }
        _ => {
            return Err(MsnError::InvalidConfig(format!(
                "{} is not a training experiment",
                config.experiment.label()
            )))
        }
    };
    let report = train(&mut net, &objective, &train_cfg)?;
    let pred = net.predict(&grid);
    let err = rmse(&net, &grid, &exact)?;
    let nan_flag = report.diverged || !err.is_finite();
    let final_exponents = net
        .as_msn()
        .map(|m| {
            m.exponents()
                .into_iter()
                .map(|e| LayerExponentValues {
                    even: e.mu,
                    odd: e.lambda,
                })
                .collect()
        })
        .unwrap_or_default();
    let mut solution_csv = String::from("x,predicted,exact\n");
    for (x, p) in grid.iter().zip(&pred) {
        let _ = writeln!(solution_csv, "{x},{p},{}", exact(*x));
    }
    Ok(SeedRun {
        result: SeedResult {
            seed,
            rmse: if nan_flag { None } else { Some(err) },
            final_exponents,
            param_count: net.param_count(),
            nan_flag,
            steps_run: report.steps_run,
            final_loss: report.final_loss().filter(LossBreakdown::is_finite),
        },
        trace_csv: trace_csv(&report.trace),
        exponents_csv: exponents_csv(&report.exponents),
        solution_csv,
        network: net,
    })
}

/// Run every seed with at most `jobs` concurrent threads. Results keep the
/// order of `config.seeds`.
pub fn run_seeds(config: &ExperimentConfig, jobs: usize) -> Result<Vec<SeedRun>> {
    let jobs = jobs.max(1);
    let mut out: Vec<Option<Result<SeedRun>>> = (0..config.seeds.len()).map(|_| None).collect();
    for (chunk_seeds, chunk_out) in config.seeds.chunks(jobs).zip(out.chunks_mut(jobs)) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk_seeds
                .iter()
                .map(|&seed| s.spawn(move || run_seed(config, seed)))
                .collect();
            for (slot, h) in chunk_out.iter_mut().zip(handles) {
                *slot = Some(h.join().unwrap_or_else(|_| Err(MsnError::Infeasible("seed run panicked".into()))));
            }
        });
    }
    out.into_iter().map(|r| r.expect("every seed ran")).collect()
}

fn theory_grid(n: usize) -> Vec<f64> {
    equispaced(0.1, 2.0, n)
}

/// Gram, closed-form and quadrature residuals on the grid, as CSV rows.
fn oracle_check(n: usize) -> Result<(String, TheoryOutcome)> {
    let grid = theory_grid(n);
    let mut csv = String::from("alpha,mu,gram,closed_form,quadrature,max_abs_diff\n");
    let mut worst: f64 = 0.0;
    for &alpha in &grid {
        for &mu in &grid {
            let p = theory::ProjectionProblem::new(alpha, vec![mu])?;
            let gram = theory::projection_error_sq(&p)?;
            let closed = theory::projection_error_sq_closed_k1(alpha, mu);
            let coeffs = theory::projection_coeffs(&p)?;
            let quad = theory::quadrature_l2_error(alpha, &[mu], &coeffs)?;
            let diff = (gram - closed).abs().max((gram - quad).abs()).max((closed - quad).abs());
            worst = worst.max(diff);
            let _ = writeln!(csv, "{alpha},{mu},{gram:e},{closed:e},{quad:e},{diff:e}");
        }
    }
    // zero at a match, independently of the grid
    let at_match = theory::projection_error_sq(&theory::ProjectionProblem::new(0.5, vec![0.5, 1.3])?)?;
    let passed = worst <= 1e-9 && at_match <= 1e-12;
    Ok((
        csv,
        TheoryOutcome {
            passed,
            max_abs_diff: Some(worst),
            rows: grid.len() * grid.len(),
        },
    ))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

/// Run `config`, writing artefacts to its output directory when one is set.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentResult> {
    config.validate()?;
    let dir = config.output_dir.as_deref();
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
    }
    let mut result = ExperimentResult {
        schema_version: SCHEMA_VERSION,
        experiment: config.experiment.label(),
        model: None,
        per_seed: Vec::new(),
        aggregate: Aggregate {
            rmse_mean: None,
            rmse_std: None,
            params: 0,
        },
        exclusions: 0,
        theory: None,
        config_echo: config.clone(),
    };
    if config.experiment.is_theory() {
        let (name, csv, outcome) = match config.experiment {
            Experiment::Landscape => {
                let grid = theory_grid(config.grid_size);
                let e = theory::error_landscape(&grid, &grid)?;
                let diag_zero = (0..grid.len()).all(|i| e[i][i] == 0.0);
                let outcome = TheoryOutcome {
                    passed: diag_zero,
                    max_abs_diff: None,
                    rows: grid.len() * grid.len(),
                };
                ("landscape.csv", theory::landscape_csv(&grid, &grid, &e), outcome)
            }
            Experiment::OracleCheck => {
                let (csv, outcome) = oracle_check(config.grid_size)?;
                ("oracle_check.csv", csv, outcome)
            }
            _ => {
                let eps: Vec<f64> = (1..=8).map(|k| 10f64.powi(-k)).collect();
                let rows = theory::mlp_gap_table(0.5, &eps);
                let outcome = TheoryOutcome {
                    passed: rows.windows(2).all(|w| w[1].delta < w[0].delta),
                    max_abs_diff: None,
                    rows: rows.len(),
                };
                ("gap_table.csv", theory::gap_table_csv(&rows), outcome)
            }
        };
        if let Some(d) = dir {
            write_file(d, name, &csv)?;
        }
        result.theory = Some(outcome);
    } else {
        let runs = run_seeds(config, jobs)?;
        let params = config.model.param_count()?;
        result.model = Some(config.model.name());
        for run in &runs {
            if let Some(d) = dir {
                let s = run.result.seed;
                write_file(d, &format!("trace_{s}.csv"), &run.trace_csv)?;
                write_file(d, &format!("exponents_{s}.csv"), &run.exponents_csv)?;
                write_file(d, &format!("solution_{s}.csv"), &run.solution_csv)?;
            }
        }
        result.per_seed = runs.into_iter().map(|r| r.result).collect();
        result.exclusions = result.per_seed.iter().filter(|s| s.nan_flag).count();
        result.aggregate = Aggregate::from_seeds(&result.per_seed, params);
    }
    if let Some(d) = dir {
        write_file(d, "result.json", &serde_json::to_string_pretty(&result)?)?;
    }
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
    pub kind: String,
}

/// Pooled histogram of final exponents over all finite seeds and layers,
/// one block of `bins` rows per kind over a shared range.
pub fn exponent_histogram(result: &ExperimentResult, bins: usize) -> Result<Vec<HistogramRow>> {
    if result.per_seed.is_empty() {
        return Err(MsnError::InvalidConfig("no seeds to histogram".into()));
    }
    if bins == 0 {
        return Err(MsnError::InvalidConfig("need at least one bin".into()));
    }
    let mut even = Vec::new();
    let mut odd = Vec::new();
    for s in result.per_seed.iter().filter(|s| !s.nan_flag) {
        for l in &s.final_exponents {
            even.extend(&l.even);
            odd.extend(&l.odd);
        }
    }
    let all = even.iter().chain(&odd);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut rows = Vec::with_capacity(2 * bins);
    for (kind, vals) in [("even", &even), ("odd", &odd)] {
        let mut counts = vec![0usize; bins];
        for &v in vals.iter() {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        for (b, count) in counts.into_iter().enumerate() {
            rows.push(HistogramRow {
                bin_lo: lo + b as f64 * width,
                bin_hi: lo + (b + 1) as f64 * width,
                count,
                kind: kind.to_string(),
            });
        }
    }
    Ok(rows)
}

/// `bin_lo,bin_hi,count,kind`
pub fn histogram_csv(rows: &[HistogramRow]) -> String {
    let mut out = String::from("bin_lo,bin_hi,count,kind\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.bin_lo, r.bin_hi, r.count, r.kind);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub rmse_mean: Option<f64>,
    pub rmse_std: Option<f64>,
    pub params: usize,
    pub exclusions: usize,
}

/// Train every model on `base.experiment` with shared settings; rows sorted
/// by mean RMSE (diverged models last).
pub fn compare_models(base: &ExperimentConfig, models: &[ModelSpec], jobs: usize) -> Result<Vec<ComparisonRow>> {
    if models.len() < 2 {
        return Err(MsnError::InvalidConfig("comparison needs at least two models".into()));
    }
    let mut rows = Vec::with_capacity(models.len());
    for model in models {
        let cfg = ExperimentConfig {
            model: model.clone(),
            output_dir: base.output_dir.as_ref().map(|d| d.join(model.name())),
            ..base.clone()
        };
        let r = run_experiment(&cfg, jobs)?;
        rows.push(ComparisonRow {
            name: model.name(),
            rmse_mean: r.aggregate.rmse_mean,
            rmse_std: r.aggregate.rmse_std,
            params: r.aggregate.params,
            exclusions: r.exclusions,
        });
    }
    rows.sort_by(|a, b| {
        let key = |r: &ComparisonRow| r.rmse_mean.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b))
    });
    if let Some(d) = &base.output_dir {
        std::fs::create_dir_all(d)?;
        write_file(d, "comparison.csv", &comparison_csv(&rows))?;
        write_file(d, "comparison.json", &serde_json::to_string_pretty(&rows)?)?;
    }
    Ok(rows)
}

/// `name,rmse_mean,rmse_std,params`
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("name,rmse_mean,rmse_std,params\n");
    let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:e}"));
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.name, fmt(r.rmse_mean), fmt(r.rmse_std), r.params);
    }
    out
}
