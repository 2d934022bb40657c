//! Experiment driver behind the command-line tool: configuration, the run
//! scheduler with resume, metric aggregation and figure output.

pub mod config;
pub mod plot;
pub mod report;
pub mod runner;

use std::path::{Path, PathBuf};

pub use config::{BenchmarkConfig, Budgets, ExperimentConfig, Hyperparameter, CONFIG_SCHEMA_VERSION, HYPERPARAMETERS};
pub use plot::{line_plot, path_plot, Series};
pub use report::{
    aggregate, metric_rows, metrics_csv, summary_table, sweep_csv, sweep_rows, sweep_table, Aggregate, MetricRow,
    SweepRow, METRICS_HEADER,
};
pub use runner::{execute, load_results, plan, read_generated, run_dir, single_task_successes, Benchmark, ExperimentOutcome, PlannedRun};

use crate::analysis::{coverage_csv, expected_coverage_draws, offcourse_csv, offcourse_probability};
use crate::engine::MethodKind;
use crate::error::{Error, Result};
use crate::pathworld::TaskSpec;
use crate::rng::SeedTree;

/// Ratios of the replay-amount sweep.
pub const SWEEP_RATIOS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

/// Overrides applied on top of a loaded configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    /// Replaces the seed list with this single seed.
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        cfg
    }
}

pub fn cmd_run(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentOutcome> {
    execute(cfg, &cfg.output_dir, workers)
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub outcome: ExperimentOutcome,
}

/// Runs the replay methods of `cfg` at every ratio and writes `sweep.md` and
/// `sweep.csv` next to the usual outputs.
pub fn cmd_sweep(cfg: &ExperimentConfig, ratios: &[f64], workers: usize) -> Result<SweepReport> {
    if let Some(m) = cfg.methods.iter().find(|m| !matches!(m, MethodKind::Tdgr | MethodKind::Dgr)) {
        return Err(Error::config(format!("methods: the ratio sweep supports t-DGR and DGR only, got {m}")));
    }
    let mut cfg = cfg.clone();
    cfg.replay_ratios = ratios.to_vec();
    let outcome = execute(&cfg, &cfg.output_dir, workers)?;
    let rows = sweep_rows(&metric_rows(&outcome.results, &outcome.references)?, &cfg.methods, ratios);
    std::fs::write(cfg.output_dir.join("sweep.md"), sweep_table(&rows))?;
    std::fs::write(cfg.output_dir.join("sweep.csv"), sweep_csv(&rows))?;
    Ok(SweepReport { rows, outcome })
}

/// Writes quality curves and generated-path overlays for every stored run.
/// Runs without the needed data are skipped with a warning.
pub fn cmd_plot(results_dir: &Path) -> Result<Vec<PathBuf>> {
    let plots = results_dir.join("plots");
    std::fs::create_dir_all(&plots)?;
    let tasks: Option<Vec<TaskSpec>> = std::fs::read_to_string(results_dir.join("benchmark.json"))
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok());
    let mut written = Vec::new();
    let results = load_results(results_dir)?;
    if results.is_empty() {
        log::warn!("no results under {}", results_dir.display());
    }
    for r in results {
        let stem = format!("{}_seed{}", r.label, r.seed);
        if r.quality.is_empty() {
            log::warn!("{stem}: no generation-quality series, skipping quality plot");
        } else {
            let mut series: Vec<Series> = Vec::new();
            let mut csv = String::from("bucket,task,l1_error\n");
            for q in &r.quality {
                csv.push_str(&format!("{},{},{}\n", q.bucket, q.task, q.value));
                let name = format!("task {}", q.task);
                match series.iter_mut().find(|s| s.name == name) {
                    Some(s) => s.points.push((q.bucket as f64, q.value)),
                    None => series.push(Series { name, points: vec![(q.bucket as f64, q.value)] }),
                }
            }
            let title = format!("{} generation quality (seed {})", r.method.display_name(), r.seed);
            for (name, body) in [
                (format!("quality_{stem}.svg"), line_plot(&title, "bucket", "L1 noise error", &series)),
                (format!("quality_{stem}.csv"), csv),
            ] {
                let path = plots.join(name);
                std::fs::write(&path, body)?;
                written.push(path);
            }
        }
        let generated = run_dir(results_dir, &r.label, r.seed).join("generated.csv");
        match (&tasks, std::fs::read_to_string(&generated)) {
            (Some(tasks), Ok(src)) => {
                let states = read_generated(&src)?;
                let title = format!("{} generated states (seed {})", r.method.display_name(), r.seed);
                let path = plots.join(format!("paths_{stem}.svg"));
                std::fs::write(&path, path_plot(&title, tasks, &states))?;
                written.push(path);
            }
            _ if r.method.uses_replay_ratio() => log::warn!("{stem}: no generated trajectories, skipping path plot"),
            _ => {}
        }
    }
    Ok(written)
}

/// Coverage and compounding-error analyses, written as CSV plus SVG.
pub fn cmd_analyze(out: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let seeds = SeedTree::new(seed).child("coverage");
    let mut reports = Vec::new();
    for n in [4, 16, 50, 100] {
        for m in [1, 2, 5] {
            reports.push(expected_coverage_draws(n, m, 10_000, &seeds.index((n * 100 + m) as u64))?);
        }
    }
    let lengths: Vec<usize> = (0..=10).map(|k| k * 50).collect();
    let coverage = out.join("coverage.csv");
    std::fs::write(&coverage, coverage_csv(&reports))?;
    let offcourse = out.join("offcourse.csv");
    std::fs::write(&offcourse, offcourse_csv(0.01, &lengths)?)?;
    let mut series = Vec::new();
    for m in [1, 2, 5] {
        let points = reports.iter().filter(|r| r.m == m).map(|r| (r.n as f64, r.mean_draws)).collect();
        series.push(Series { name: format!("m = {m}"), points });
    }
    let coverage_svg = out.join("coverage.svg");
    std::fs::write(&coverage_svg, line_plot("Draws to cover every timestep", "trajectory length", "draws", &series))?;
    let points = lengths.iter().map(|&n| Ok((n as f64, offcourse_probability(0.01, n)?))).collect::<Result<Vec<_>>>()?;
    let offcourse_svg = out.join("offcourse.svg");
    std::fs::write(
        &offcourse_svg,
        line_plot("Off-course probability, 1% per step", "steps", "probability", &[Series { name: "p = 0.01".into(), points }]),
    )?;
    Ok(vec![coverage, offcourse, coverage_svg, offcourse_svg])
}
