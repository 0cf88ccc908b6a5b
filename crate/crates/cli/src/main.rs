use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msn_core::bench::{
    compare_models, comparison_csv, exponent_histogram, histogram_csv, run_experiment, Experiment, ExperimentConfig,
    ModelSpec,
};
use msn_core::error::MsnError;
use msn_core::problems::TaskName;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ALL_NAN: u8 = 3;

#[derive(Parser)]
#[command(name = "msn-bench", version, about = "Muntz-Szasz network benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON experiment config; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds, e.g. 0,1,2
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    /// msn, msn-cumsum, mlp-big or mlp-matched
    #[arg(long)]
    model: Option<String>,
    /// Seeds trained concurrently
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    n_collocation: Option<usize>,
    /// Histogram bins for learned exponents (MSN runs with --out)
    #[arg(long, default_value_t = 20)]
    bins: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Supervised 1D regression
    Supervised {
        #[arg(long, default_value = "sqrt")]
        task: TaskName,
        #[command(flatten)]
        common: Common,
    },
    /// PINN for u' = 1/(2 sqrt(x)), u(0) = 0
    PinnSqrt {
        #[command(flatten)]
        common: Common,
    },
    /// PINN for eps u'' = u' on [0, 1]
    PinnBl {
        #[arg(long)]
        eps_stiff: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Single-exponent projection error over an (alpha, mu) grid
    Landscape {
        #[arg(long)]
        grid: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Cross-check the projection error paths
    OracleCheck {
        #[arg(long)]
        grid: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// MLP breakpoint counts for a mismatched exponent
    GapTable {
        #[command(flatten)]
        common: Common,
    },
    /// Train several models on one experiment and rank them
    Compare {
        /// supervised-sqrt, supervised-cusp, supervised-sparse-poly, pinn-sqrt or pinn-bl
        #[arg(long, default_value = "supervised-sqrt")]
        experiment: String,
        #[arg(long, default_value_t = 0.05)]
        eps_stiff: f64,
        /// Comma-separated model presets
        #[arg(long, value_delimiter = ',', default_value = "msn,mlp-matched,mlp-big")]
        models: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Config(String),
    Run(String),
    AllNan,
}

impl From<MsnError> for Failure {
    fn from(e: MsnError) -> Self {
        match e {
            MsnError::InvalidConfig(_) | MsnError::Serde(_) => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn same_kind(a: &Experiment, b: &Experiment) -> bool {
    std::mem::discriminant(a) == std::mem::discriminant(b)
}

fn load_config(path: Option<&Path>, experiment: Experiment) -> Result<ExperimentConfig, Failure> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::new(experiment));
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    if !same_kind(&cfg.experiment, &experiment) {
        return Err(Failure::Config(format!(
            "config is for '{}', not '{}'",
            cfg.experiment.label(),
            experiment.label()
        )));
    }
    Ok(cfg)
}

/// File values first, then any explicit flags.
fn build_config(common: &Common, experiment: Experiment, overrides: impl FnOnce(&mut ExperimentConfig)) -> Result<ExperimentConfig, Failure> {
    let mut cfg = load_config(common.config.as_deref(), experiment)?;
    overrides(&mut cfg);
    if let Some(seeds) = &common.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    if let Some(steps) = common.steps {
        cfg.train.steps = steps;
        cfg.train.warmup_steps = cfg.train.warmup_steps.min(steps);
    }
    if let Some(w) = common.warmup {
        cfg.train.warmup_steps = w;
    }
    if let Some(lr) = common.lr {
        cfg.train.lr = lr;
    }
    if let Some(n) = common.n_collocation {
        cfg.n_collocation = n;
    }
    if let Some(m) = &common.model {
        cfg.model = ModelSpec::preset(m, &cfg.experiment)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |x| format!("{x:.5e}"))
}

fn run_single(cfg: ExperimentConfig, common: &Common) -> Result<(), Failure> {
    let result = run_experiment(&cfg, common.jobs)?;
    if let Some(t) = &result.theory {
        println!(
            "{}: {} ({} rows{})",
            result.experiment,
            if t.passed { "ok" } else { "FAILED" },
            t.rows,
            t.max_abs_diff.map_or(String::new(), |d| format!(", max diff {d:.3e}"))
        );
        return if t.passed {
            Ok(())
        } else {
            Err(Failure::Run("theory check failed".into()))
        };
    }
    for s in &result.per_seed {
        println!(
            "seed {:>3}  rmse {}  steps {}{}",
            s.seed,
            fmt_opt(s.rmse),
            s.steps_run,
            if s.nan_flag { "  (diverged)" } else { "" }
        );
    }
    let a = &result.aggregate;
    println!(
        "{} {}: rmse {} +- {}  params {}  excluded {}",
        result.experiment,
        result.model.as_deref().unwrap_or("-"),
        fmt_opt(a.rmse_mean),
        fmt_opt(a.rmse_std),
        a.params,
        result.exclusions
    );
    if let (Some(dir), ModelSpec::Msn { .. }) = (&cfg.output_dir, &cfg.model) {
        if !result.all_diverged() {
            let rows = exponent_histogram(&result, common.bins)?;
            std::fs::write(dir.join("exponent_histogram.csv"), histogram_csv(&rows))
                .map_err(|e| Failure::Run(e.to_string()))?;
        }
    }
    if result.all_diverged() {
        return Err(Failure::AllNan);
    }
    Ok(())
}

fn parse_compare_experiment(name: &str, eps_stiff: f64) -> Result<Experiment, Failure> {
    Ok(match name {
        "pinn-sqrt" => Experiment::PinnSqrt,
        "pinn-bl" => Experiment::PinnBl { eps_stiff },
        other => {
            let task = other
                .strip_prefix("supervised-")
                .ok_or_else(|| Failure::Config(format!("unknown experiment '{other}'")))?;
            let task = task.replace('-', "_").parse::<TaskName>().map_err(Failure::from)?;
            Experiment::Supervised { task }
        }
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Supervised { task, common } => {
            let cfg = build_config(&common, Experiment::Supervised { task }, |c| {
                c.experiment = Experiment::Supervised { task };
            })?;
            run_single(cfg, &common)
        }
        Command::PinnSqrt { common } => run_single(build_config(&common, Experiment::PinnSqrt, |_| {})?, &common),
        Command::PinnBl { eps_stiff, common } => {
            let cfg = build_config(&common, Experiment::PinnBl { eps_stiff: eps_stiff.unwrap_or(0.05) }, |c| {
                if let Some(e) = eps_stiff {
                    c.experiment = Experiment::PinnBl { eps_stiff: e };
                }
            })?;
            run_single(cfg, &common)
        }
        Command::Landscape { grid, common } => {
            let cfg = build_config(&common, Experiment::Landscape, |c| c.grid_size = grid.unwrap_or(c.grid_size))?;
            run_single(cfg, &common)
        }
        Command::OracleCheck { grid, common } => {
            let cfg = build_config(&common, Experiment::OracleCheck, |c| c.grid_size = grid.unwrap_or(c.grid_size))?;
            run_single(cfg, &common)
        }
        Command::GapTable { common } => run_single(build_config(&common, Experiment::GapTable, |_| {})?, &common),
        Command::Compare {
            experiment,
            eps_stiff,
            models,
            common,
        } => {
            let experiment = parse_compare_experiment(&experiment, eps_stiff)?;
            let cfg = build_config(&common, experiment, |c| c.experiment = experiment)?;
            let specs = models
                .iter()
                .map(|m| ModelSpec::preset(m, &experiment))
                .collect::<Result<Vec<_>, _>>()?;
            let rows = compare_models(&cfg, &specs, common.jobs)?;
            print!("{}", comparison_csv(&rows));
            if rows.iter().all(|r| r.rmse_mean.is_none()) {
                return Err(Failure::AllNan);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
        Err(Failure::AllNan) => {
            eprintln!("every seed diverged");
            ExitCode::from(EXIT_ALL_NAN)
        }
    }
}
