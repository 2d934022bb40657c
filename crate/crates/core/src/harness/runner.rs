//! Executes every (method, seed) run of an experiment, one directory per run.
//!
//! Layout under the output directory:
//!
//! ```text
//! benchmark.json                 tasks of the benchmark instance
//! <label>/seed_<k>/inputs.json   everything the run depends on
//! <label>/seed_<k>/result.json   RunResult
//! <label>/seed_<k>/model.ckpt    final learner checkpoint
//! <label>/seed_<k>/generated.csv sample of the last replayed trajectories
//! <label>/seed_<k>/run.log       per-bucket summary
//! reference/seed_<k>/reference.json  single-task successes for forward transfer
//! metrics.csv, summary.md
//! ```
//!
//! A run whose `result.json` is complete and whose `inputs.json` matches the
//! current plan is loaded instead of retrained.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BenchmarkConfig, ExperimentConfig};
use super::report::{metric_rows, metrics_csv, summary_table};
use crate::engine::{run_method, BcLearner, BucketContext, Learner, MethodConfig, MethodKind, RunInputs, RunResult};
use crate::error::{Error, Result};
use crate::pathworld::{
    build_stream, collect_demos, evaluate_policy, make_task, StreamBucket, StreamMode, TaskSpec, Trajectory,
};
use crate::rng::SeedTree;

/// Generated trajectories kept per run for plotting.
const GENERATED_SAMPLE: usize = 20;

/// A materialized benchmark instance.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub tasks: Vec<TaskSpec>,
    pub demos: Vec<Vec<Trajectory>>,
    pub heldout: Vec<Vec<Trajectory>>,
    pub stream: Vec<StreamBucket>,
    pub mode: StreamMode,
}

impl Benchmark {
    pub fn build(cfg: &BenchmarkConfig, mode: StreamMode) -> Result<Self> {
        let root = SeedTree::new(cfg.seed);
        let params = cfg.task_params();
        let tasks = (0..cfg.tasks)
            .map(|i| make_task(i, root.child("task").index(i as u64).seed(), &params))
            .collect::<Result<Vec<_>>>()?;
        let draw = |label: &str, count: usize| {
            tasks
                .iter()
                .map(|t| collect_demos(t, count, &mut root.child(label).index(t.id as u64).rng()))
                .collect::<Result<Vec<_>>>()
        };
        let demos = draw("demos", cfg.demos_per_task)?;
        let heldout = draw("heldout", cfg.heldout_per_task)?;
        let stream = build_stream(&demos, mode)?;
        Ok(Self { tasks, demos, heldout, stream, mode })
    }

    pub fn inputs(&self, seed: u64) -> RunInputs<'_> {
        RunInputs { tasks: &self.tasks, stream: &self.stream, mode: self.mode, heldout: &self.heldout, seed }
    }
}

/// What a run depends on; a stored run is reused only if this matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunInputsRecord {
    benchmark: BenchmarkConfig,
    stream: StreamMode,
    seed: u64,
    config: MethodConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReferenceRecord {
    benchmark: BenchmarkConfig,
    seed: u64,
    config: MethodConfig,
    success: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PlannedRun {
    pub config: MethodConfig,
    pub seed: u64,
    pub dir: PathBuf,
}

pub fn run_dir(out: &Path, label: &str, seed: u64) -> PathBuf {
    out.join(label).join(format!("seed_{seed}"))
}

pub fn plan(cfg: &ExperimentConfig, out: &Path) -> Vec<PlannedRun> {
    let mut runs = Vec::new();
    for config in cfg.method_configs() {
        for &seed in &cfg.seeds {
            runs.push(PlannedRun { dir: run_dir(out, &config.label(), seed), config: config.clone(), seed });
        }
    }
    runs
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub results: Vec<RunResult>,
    /// Single-task successes per seed, when forward transfer is enabled.
    pub references: BTreeMap<u64, Vec<f64>>,
    pub trained: usize,
    pub resumed: usize,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &RunResult> {
        self.results.iter().filter(|r| !r.completed)
    }
}

/// Runs (or resumes) the experiment on `workers` threads and writes
/// `metrics.csv` and `summary.md` to `out`.
pub fn execute(cfg: &ExperimentConfig, out: &Path, workers: usize) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let bench = Benchmark::build(&cfg.benchmark, cfg.stream)?;
    std::fs::write(out.join("benchmark.json"), serde_json::to_string_pretty(&bench.tasks)?)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("workers: {e}")))?;

    let runs = plan(cfg, out);
    let outcomes: Vec<Result<(RunResult, bool)>> =
        pool.install(|| runs.par_iter().map(|run| execute_run(cfg, &bench, run)).collect());
    let mut results = Vec::with_capacity(runs.len());
    let (mut trained, mut resumed) = (0, 0);
    for outcome in outcomes {
        let (result, was_resumed) = outcome?;
        if was_resumed {
            resumed += 1;
        } else {
            trained += 1;
        }
        results.push(result);
    }

    let mut references = BTreeMap::new();
    if cfg.forward_transfer {
        let reference_config = cfg.budgets.method_config(MethodKind::Finetune, 0.0);
        let computed: Vec<Result<(u64, Vec<f64>)>> = pool.install(|| {
            cfg.seeds
                .par_iter()
                .map(|&seed| {
                    let dir = out.join("reference").join(format!("seed_{seed}"));
                    reference_successes(&cfg.benchmark, &bench, &reference_config, seed, &dir).map(|s| (seed, s))
                })
                .collect()
        });
        for c in computed {
            let (seed, s) = c?;
            references.insert(seed, s);
        }
    }

    let rows = metric_rows(&results, &references)?;
    std::fs::write(out.join("metrics.csv"), metrics_csv(&rows))?;
    std::fs::write(out.join("summary.md"), summary_table(&results, &rows))?;
    Ok(ExperimentOutcome { results, references, trained, resumed })
}

fn execute_run(cfg: &ExperimentConfig, bench: &Benchmark, run: &PlannedRun) -> Result<(RunResult, bool)> {
    let record = RunInputsRecord {
        benchmark: cfg.benchmark.clone(),
        stream: cfg.stream,
        seed: run.seed,
        config: run.config.clone(),
    };
    if let Some(stored) = load_completed(&run.dir, &record) {
        log::info!("{} seed {}: reusing stored result", stored.label, stored.seed);
        return Ok((stored, true));
    }
    std::fs::create_dir_all(&run.dir)?;
    std::fs::write(run.dir.join("inputs.json"), serde_json::to_string_pretty(&record)?)?;
    log::info!("{} seed {}: training", run.config.label(), run.seed);
    let output = run_method(&run.config, bench.inputs(run.seed));
    let result = output.result;
    if let Some(learner) = output.learner {
        learner.checkpoint().save(&run.dir.join("model.ckpt"))?;
        write_generated(&run.dir.join("generated.csv"), &*learner)?;
    }
    std::fs::write(run.dir.join("run.log"), run_log(&result))?;
    // Written last: its presence marks the run as finished.
    std::fs::write(run.dir.join("result.json"), result.to_json()?)?;
    Ok((result, false))
}

fn load_completed(dir: &Path, record: &RunInputsRecord) -> Option<RunResult> {
    let inputs: RunInputsRecord = serde_json::from_str(&std::fs::read_to_string(dir.join("inputs.json")).ok()?).ok()?;
    if &inputs != record {
        return None;
    }
    let result = RunResult::from_json(&std::fs::read_to_string(dir.join("result.json")).ok()?).ok()?;
    result.completed.then_some(result)
}

/// One row per generated step: `trajectory,task,timestep,x,y,ax,ay`, where
/// `task` is the label attached to that state.
pub const GENERATED_HEADER: &str = "trajectory,task,timestep,x,y,ax,ay";

fn write_generated(path: &Path, learner: &dyn Learner) -> Result<()> {
    let generated = learner.last_generated();
    if generated.is_empty() {
        return Ok(());
    }
    let mut out = format!("{GENERATED_HEADER}\n");
    for (k, g) in generated.iter().take(GENERATED_SAMPLE).enumerate() {
        for s in &g.steps {
            let _ = writeln!(out, "{k},{},{},{},{},{},{}", s.task, s.timestep, s.state[0], s.state[1], s.action[0], s.action[1]);
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// `(task, state)` pairs from a `generated.csv` file.
pub fn read_generated(src: &str) -> Result<Vec<(usize, crate::pathworld::Point)>> {
    let mut lines = src.lines();
    if lines.next() != Some(GENERATED_HEADER) {
        return Err(Error::Format("generated.csv has an unexpected header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::Format(format!("bad generated.csv row: {l}"));
            if f.len() != 7 {
                return Err(bad());
            }
            let task = f[1].parse().map_err(|_| bad())?;
            let x = f[3].parse().map_err(|_| bad())?;
            let y = f[4].parse().map_err(|_| bad())?;
            Ok((task, [x, y]))
        })
        .collect()
}

fn run_log(result: &RunResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} seed {} completed={} wall_clock={:.1}s", result.label, result.seed, result.completed, result.wall_clock_secs);
    for b in &result.buckets {
        let _ = writeln!(
            s,
            "bucket {}: policy_loss={:.6} generator_loss={} real_pairs={} generated_pairs={}",
            b.bucket,
            b.policy_loss,
            b.generator_loss.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
            b.real_pairs,
            b.generated_pairs
        );
        for w in &b.warnings {
            let _ = writeln!(s, "  warning: {w}");
        }
    }
    if let Some(e) = &result.error {
        let _ = writeln!(s, "error: {e}");
    }
    s
}

/// Success of a fresh learner trained on each task alone, for forward transfer.
fn reference_successes(
    bench_cfg: &BenchmarkConfig,
    bench: &Benchmark,
    config: &MethodConfig,
    seed: u64,
    dir: &Path,
) -> Result<Vec<f64>> {
    let path = dir.join("reference.json");
    if let Ok(src) = std::fs::read_to_string(&path) {
        if let Ok(r) = serde_json::from_str::<ReferenceRecord>(&src) {
            if &r.benchmark == bench_cfg && r.seed == seed && &r.config == config {
                return Ok(r.success);
            }
        }
    }
    let success = single_task_successes(config, bench, seed)?;
    std::fs::create_dir_all(dir)?;
    let record = ReferenceRecord { benchmark: bench_cfg.clone(), seed, config: config.clone(), success: success.clone() };
    std::fs::write(path, serde_json::to_string_pretty(&record)?)?;
    Ok(success)
}

pub fn single_task_successes(config: &MethodConfig, bench: &Benchmark, seed: u64) -> Result<Vec<f64>> {
    let root = SeedTree::new(seed).child("reference");
    let queries = Cell::new(0);
    bench
        .tasks
        .iter()
        .zip(&bench.demos)
        .map(|(task, demos)| {
            let seeds = root.index(task.id as u64);
            let mut learner = BcLearner::new(config, bench.tasks.len(), config.policy_epochs, &seeds.child("learner"))?;
            let bucket = StreamBucket { index: 0, trajectories: demos.clone() };
            learner.train_bucket(&bucket, &BucketContext::new(0, seeds.child("bucket"), Some(task.id), &queries))?;
            let policy = learner.policy_for(task.id);
            Ok(evaluate_policy(&*policy, task, config.eval_episodes, &mut seeds.stream("eval")))
        })
        .collect()
}

/// Loads every `result.json` under `out`, sorted by label then seed.
pub fn load_results(out: &Path) -> Result<Vec<RunResult>> {
    let mut results = Vec::new();
    let mut labels: Vec<PathBuf> = read_dirs(out)?;
    labels.sort();
    for label in labels {
        let mut seeds = read_dirs(&label)?;
        seeds.sort();
        for seed in seeds {
            let path = seed.join("result.json");
            if path.is_file() {
                results.push(RunResult::from_json(&std::fs::read_to_string(&path)?)?);
            }
        }
    }
    results.sort_by(|a, b| a.label.cmp(&b.label).then(a.seed.cmp(&b.seed)));
    Ok(results)
}

fn read_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    Ok(out)
}
