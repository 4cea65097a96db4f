use std::fs;
use std::process::Command;

use itree::harness::{self, parse_trace_csv, Algorithm, Experiment, RunConfig};
use itree::trainer::{Trainer, TrainerState};

fn config(experiment: Experiment, algorithm: Algorithm, budget: u64, seed: u64) -> RunConfig {
    RunConfig::new(experiment, algorithm, budget, seed)
}

#[test]
fn tiny_budget_runs_exactly_one_refinement() {
    let s = harness::execute(&config(Experiment::Conjugate, Algorithm::It, 1, 0)).unwrap();
    assert_eq!(s.trace.len(), 1);
    assert_eq!(s.last().iteration, 1);
    assert!(s.last().evals_used >= 1);
}

#[test]
fn artifacts_are_written_and_parse() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Experiment::Gmm, Algorithm::It, 20_000, 2);
    cfg.out = Some(dir.path().to_path_buf());
    let s = harness::execute(&cfg).unwrap();
    for name in ["config.json", "trace.csv", "measure.jsonl", "tree.json", "data.csv", "data.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let trace = parse_trace_csv(&fs::read_to_string(dir.path().join("trace.csv")).unwrap()).unwrap();
    assert_eq!(trace, s.trace);
    let lines = fs::read_to_string(dir.path().join("measure.jsonl")).unwrap();
    let total: f64 = lines
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["weight"].as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
    let resolved: RunConfig = serde_json::from_str(&fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved, cfg.resolve().unwrap());
}

#[test]
fn checkpointed_trainer_continues_identically() {
    let cfg = config(Experiment::Gmm, Algorithm::It, 40_000, 4).resolve().unwrap();
    let built = harness::build(&cfg).unwrap();
    let mut straight = Trainer::new(built.base.clone(), cfg.trainer_settings()).unwrap();
    straight.run(|_, _| Ok(())).unwrap();

    let mut first = Trainer::new(built.base.clone(), cfg.trainer_settings()).unwrap();
    for _ in 0..5 {
        first.step().unwrap();
    }
    let json = serde_json::to_string(first.state()).unwrap();
    let state: TrainerState = serde_json::from_str(&json).unwrap();
    let mut second = Trainer::resume(built.base.clone(), cfg.trainer_settings(), state).unwrap();
    second.run(|_, _| Ok(())).unwrap();

    assert_eq!(second.iteration(), straight.iteration());
    assert_eq!(second.evals_used(), straight.evals_used());
    assert_eq!(second.tree().log_ml().to_bits(), straight.tree().log_ml().to_bits());
    assert_eq!(second.tree().n_leaves(), straight.tree().n_leaves());
}

#[test]
fn resume_extends_a_finished_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Experiment::Gmm, Algorithm::It, 15_000, 4);
    cfg.out = Some(dir.path().to_path_buf());
    let short = harness::execute(&cfg).unwrap();
    let again = harness::resume(dir.path(), None).unwrap();
    assert_eq!(again.trace, short.trace);
    let longer = harness::resume(dir.path(), Some(40_000)).unwrap();
    assert_eq!(&longer.trace[..short.trace.len()], &short.trace[..]);
    assert!(longer.last().evals_used >= 40_000);
    assert!(longer.last().iteration > short.last().iteration);
    let written = parse_trace_csv(&fs::read_to_string(dir.path().join("trace.csv")).unwrap()).unwrap();
    assert_eq!(written, longer.trace);
}

#[test]
fn pmmh_writes_a_chain_and_no_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Experiment::Chaos, Algorithm::Pmmh, 200_000, 1);
    cfg.out = Some(dir.path().to_path_buf());
    let s = harness::execute(&cfg).unwrap();
    assert!(dir.path().join("chain.csv").exists());
    assert!(!dir.path().join("tree.json").exists());
    assert!(s.last().ess.is_nan());
    assert!(harness::resume(dir.path(), None).is_err());
}

#[test]
fn state_space_baselines_reject_other_models() {
    assert!(harness::execute(&config(Experiment::Gmm, Algorithm::Pmmh, 1000, 0)).is_err());
    assert!(harness::execute(&config(Experiment::Network, Algorithm::Smc, 1000, 0)).is_err());
}

#[test]
fn compare_writes_quartiles_and_checks_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let cfgs = [config(Experiment::Conjugate, Algorithm::It, 5_000, 0), config(Experiment::Conjugate, Algorithm::Is, 5_000, 0)];
    let rows = harness::compare(&cfgs, 3, Some(dir.path())).unwrap();
    assert!(rows.iter().any(|r| r.label == "it") && rows.iter().any(|r| r.label == "is"));
    for r in &rows {
        assert!(r.log_ml[0] <= r.log_ml[1] && r.log_ml[1] <= r.log_ml[2]);
    }
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("label,evals,log_ml_q25,log_ml_median,log_ml_q75"));
    assert!(dir.path().join("0-it/rep2/trace.csv").exists());
    let mismatched = [cfgs[0].clone(), config(Experiment::Conjugate, Algorithm::Is, 6_000, 0)];
    assert!(harness::compare(&mismatched, 1, None).is_err());
}

#[test]
fn cli_reports_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "experiment = \"gmm\"\nalgorithm = \"it\"\nseed = 1\nbudget = 0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_itree")).args(["run", "--config"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
    fs::write(&path, "experiment = \"gmm\"\nalgorithm = \"it\"\nseed = 1\nbudget = 10\nbogus = 3\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_itree")).args(["run", "--config"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn shipped_configs_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&path).unwrap().resolve().unwrap();
            n += 1;
        }
    }
    assert!(n > 0);
}
