use std::path::Path;
use std::process::{Command, Output};

use msn_core::bench::{Experiment, ExperimentConfig, ExperimentResult, ModelSpec};
use msn_core::powbasis::ExponentMode;
use msn_core::problems::TaskName;

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msn-bench")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn tiny_config(dir: &Path, experiment: Experiment) -> String {
    let mut cfg = ExperimentConfig::new(experiment);
    cfg.model = ModelSpec::Msn {
        mode: ExponentMode::Bounded,
        k_even: 2,
        k_odd: 2,
        p_max: 2.0,
        hidden: vec![3],
    };
    cfg.train.steps = 3;
    cfg.train.warmup_steps = 1;
    cfg.seeds = vec![0];
    cfg.n_collocation = 16;
    cfg.n_boundary = 4;
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_result(dir: &Path) -> ExperimentResult {
    serde_json::from_str(&std::fs::read_to_string(dir.join("result.json")).unwrap()).unwrap()
}

#[test]
fn theory_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("oracle");
    let o = bench(&["oracle-check", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("oracle_check.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 400);

    let out = tmp.path().join("land");
    let o = bench(&["landscape", "--grid", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(out.join("landscape.csv")).unwrap();
    assert!(csv.starts_with("alpha,mu,error\n"));
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().filter(|r| r[0] == r[1]).all(|r| r[2] == 0.0));

    let out = tmp.path().join("gap");
    assert_eq!(code(&bench(&["gap-table", "--out", out.to_str().unwrap()])), 0);
    assert!(std::fs::read_to_string(out.join("gap_table.csv")).unwrap().starts_with("eps,delta,sqrt_eps,relu_neurons\n"));
}

#[test]
fn flags_override_file_values() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), Experiment::Supervised { task: TaskName::Sqrt });
    let out = tmp.path().join("run");
    let o = bench(&["supervised", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_result(&out);
    assert_eq!(r.per_seed.len(), 1);
    assert_eq!(r.per_seed[0].steps_run, 3);
    for f in ["trace_0.csv", "exponents_0.csv", "solution_0.csv", "exponent_histogram.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let o = bench(&["supervised", "--config", &cfg, "--out", out.to_str().unwrap(), "--steps", "5", "--seeds", "4,7"]);
    assert_eq!(code(&o), 0);
    let r = read_result(&out);
    assert_eq!(r.per_seed.iter().map(|s| s.seed).collect::<Vec<_>>(), vec![4, 7]);
    assert!(r.per_seed.iter().all(|s| s.steps_run == 5));
    assert_eq!(r.config_echo.train.steps, 5);
    // untouched file values survive
    assert_eq!(r.config_echo.n_collocation, 16);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&bench(&["pinn-sqrt", "--config", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&bench(&["pinn-sqrt", "--model", "resnet", "--steps", "1"])), 2);
    assert_eq!(code(&bench(&["supervised", "--task", "sine"])), 2);
    assert_eq!(code(&bench(&["pinn-bl", "--eps-stiff", "-1"])), 2);
    // a config for another experiment
    let cfg = tiny_config(tmp.path(), Experiment::PinnSqrt);
    assert_eq!(code(&bench(&["pinn-bl", "--config", &cfg])), 2);
}

#[test]
fn all_seeds_diverging_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), Experiment::PinnBl { eps_stiff: 0.1 });
    let out = tmp.path().join("nan");
    let o = bench(&["pinn-bl", "--config", &cfg, "--lr", "1e300", "--seeds", "0,1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
    let r = read_result(&out);
    assert!(r.per_seed.iter().all(|s| s.nan_flag && s.rmse.is_none()));
    assert_eq!(r.exclusions, 2);
    assert_eq!(r.aggregate.rmse_mean, None);
}

#[test]
fn compare_ranks_models() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), Experiment::Supervised { task: TaskName::SparsePoly });
    let out = tmp.path().join("cmp");
    let o = bench(&[
        "compare",
        "--experiment",
        "supervised-sparse-poly",
        "--models",
        "msn,mlp-matched",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&o.stdout), csv);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "name,rmse_mean,rmse_std,params");
    assert_eq!(lines.len(), 3);
    let means: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(means[0] <= means[1]);
    assert!(out.join("comparison.json").exists());
    assert_eq!(code(&bench(&["compare", "--experiment", "nonsense"])), 2);
}
