//! The public API end to end on a tiny configuration.

use tdgr::engine::{run_method, MethodKind};
use tdgr::harness::{self, load_results, read_generated, Benchmark, ExperimentConfig, METRICS_HEADER};
use tdgr::nn::Checkpoint;
use tdgr::pathworld::StreamMode;

fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml_str(include_str!("../../../configs/minimal.toml")).unwrap();
    cfg.methods = vec![MethodKind::Finetune, MethodKind::Multitask, MethodKind::Tdgr];
    cfg
}

#[test]
fn execute_writes_a_loadable_results_tree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let outcome = harness::execute(&cfg, dir.path(), 1).unwrap();
    assert_eq!(outcome.failures().count(), 0);
    assert_eq!(outcome.results.len(), 3);

    let mut loaded = load_results(dir.path()).unwrap();
    let mut expected = outcome.results.clone();
    loaded.sort_by(|a, b| a.label.cmp(&b.label));
    expected.sort_by(|a, b| a.label.cmp(&b.label));
    assert_eq!(loaded, expected);

    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some(METRICS_HEADER));
    assert!(metrics.lines().any(|l| l.starts_with("tdgr,1,0.9,success,")), "{metrics}");

    let run = dir.path().join("tdgr_r0.9").join("seed_1");
    let generated = read_generated(&std::fs::read_to_string(run.join("generated.csv")).unwrap()).unwrap();
    assert!(!generated.is_empty());
    assert!(generated.iter().all(|(task, p)| *task < cfg.benchmark.tasks && p.iter().all(|v| v.is_finite())));
    let ckpt = Checkpoint::load(&run.join("model.ckpt")).unwrap();
    assert!(ckpt.get("policy").is_some());
}

#[test]
fn run_method_matches_the_harness() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    cfg.methods = vec![MethodKind::Finetune];
    let outcome = harness::execute(&cfg, dir.path(), 1).unwrap();
    let bench = Benchmark::build(&cfg.benchmark, StreamMode::Sequential).unwrap();
    let direct = run_method(&cfg.budgets.method_config(MethodKind::Finetune, 0.0), bench.inputs(1)).result;
    assert_eq!(direct.evaluations, outcome.results[0].evaluations);
}
