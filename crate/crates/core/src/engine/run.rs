//! Run orchestration: train bucket by bucket and evaluate every task after each.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{MethodConfig, MethodKind};
use super::generator::StateSample;
use super::learner::{build_learner, BucketContext, BucketLog, Learner};
use super::policy::steps_of;
use crate::error::{Error, Result};
use crate::metrics::{QualityPoint, SuccessMatrix};
use crate::pathworld::{evaluate_policy, StreamBucket, StreamMode, TaskSpec, Trajectory};
use crate::rng::SeedTree;

pub const RESULT_SCHEMA_VERSION: u32 = 1;

/// Everything a run consumes besides its hyperparameters.
#[derive(Clone, Copy)]
pub struct RunInputs<'a> {
    pub tasks: &'a [TaskSpec],
    pub stream: &'a [StreamBucket],
    pub mode: StreamMode,
    /// Per-task trajectories used only to measure generation quality.
    pub heldout: &'a [Vec<Trajectory>],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub schema_version: u32,
    pub label: String,
    pub method: MethodKind,
    pub seed: u64,
    pub stream_mode: StreamMode,
    pub config: MethodConfig,
    /// `evaluations[t][i]`: success of task `i` at evaluation point `t`.
    pub evaluations: Vec<Vec<f64>>,
    pub trained_at: Vec<usize>,
    pub buckets: Vec<BucketLog>,
    pub quality: Vec<QualityPoint>,
    /// Times the learner asked for the current task's identity.
    pub boundary_queries: usize,
    /// Trained on all data at once, so forgetting and transfer are not meaningful.
    pub joint: bool,
    pub completed: bool,
    pub error: Option<String>,
    pub wall_clock_secs: f64,
}

impl RunResult {
    pub fn success_matrix(&self) -> Result<SuccessMatrix> {
        let tasks = self.trained_at.len();
        let rates = (0..tasks).map(|i| self.evaluations.iter().map(|col| col[i]).collect()).collect();
        SuccessMatrix::new(rates, self.trained_at.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: RunResult = serde_json::from_str(s)?;
        if r.schema_version != RESULT_SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported result schema version {}", r.schema_version)));
        }
        Ok(r)
    }
}

pub struct RunOutput {
    pub result: RunResult,
    /// The trained learner, absent if construction failed.
    pub learner: Option<Box<dyn Learner>>,
}

/// Column right after each task's data was last seen.
pub fn trained_columns(stream: &[StreamBucket], task_count: usize) -> Vec<usize> {
    let mut at = vec![stream.len(); task_count];
    for b in stream {
        for t in &b.trajectories {
            at[t.task] = b.index + 1;
        }
    }
    at
}

fn evaluate_all(learner: &dyn Learner, tasks: &[TaskSpec], episodes: usize, seeds: &SeedTree) -> Vec<f64> {
    tasks
        .iter()
        .enumerate()
        .map(|(i, task)| {
            let policy = learner.policy_for(i);
            evaluate_policy(&*policy, task, episodes, &mut seeds.index(i as u64).rng())
        })
        .collect()
}

fn heldout_samples(heldout: &[Trajectory]) -> Vec<StateSample> {
    heldout
        .iter()
        .flat_map(steps_of)
        .map(|s| StateSample { state: s.state, task: s.task, timestep: s.timestep })
        .collect()
}

fn merged(stream: &[StreamBucket]) -> StreamBucket {
    StreamBucket { index: 0, trajectories: stream.iter().flat_map(|b| b.trajectories.iter().cloned()).collect() }
}

/// Trains `config.method` on the stream, evaluating all tasks before
/// training and after each bucket. Failures end the run early and are
/// recorded in the result together with everything measured so far.
pub fn run_method(config: &MethodConfig, inputs: RunInputs<'_>) -> RunOutput {
    let start = Instant::now();
    let root = SeedTree::new(inputs.seed);
    let eval_seeds = root.child("eval");
    let learner_seeds = root.child("learner");
    let task_count = inputs.tasks.len();
    let mut result = RunResult {
        schema_version: RESULT_SCHEMA_VERSION,
        label: config.label(),
        method: config.method,
        seed: inputs.seed,
        stream_mode: inputs.mode,
        config: config.clone(),
        evaluations: Vec::new(),
        trained_at: trained_columns(inputs.stream, task_count),
        buckets: Vec::new(),
        quality: Vec::new(),
        boundary_queries: 0,
        joint: config.method == MethodKind::Multitask,
        completed: false,
        error: None,
        wall_clock_secs: 0.0,
    };
    let fail = |mut result: RunResult, e: Error, learner| {
        log::error!("{} seed {}: {e}", result.label, result.seed);
        result.error = Some(e.to_string());
        result.wall_clock_secs = start.elapsed().as_secs_f64();
        RunOutput { result, learner }
    };
    if let Err(e) = config.validate() {
        return fail(result, e, None);
    }
    let mut learner = match build_learner(config, task_count, &learner_seeds) {
        Ok(l) => l,
        Err(e) => return fail(result, e, None),
    };
    let episodes = config.eval_episodes;
    result.evaluations.push(evaluate_all(&*learner, inputs.tasks, episodes, &eval_seeds.index(0)));

    let queries = Cell::new(0);
    let joint_stream;
    let buckets: &[StreamBucket] = if result.joint {
        joint_stream = [merged(inputs.stream)];
        &joint_stream
    } else {
        inputs.stream
    };
    let heldout: Vec<Vec<StateSample>> = inputs.heldout.iter().map(|h| heldout_samples(h)).collect();
    let mut seen = BTreeSet::new();
    for bucket in buckets {
        let boundary = match inputs.mode {
            StreamMode::Sequential if !result.joint => bucket.trajectories.first().map(|t| t.task),
            _ => None,
        };
        let ctx = BucketContext::new(bucket.index, learner_seeds.child("bucket").index(bucket.index as u64), boundary, &queries);
        let trained = learner.train_bucket(bucket, &ctx);
        result.boundary_queries = queries.get();
        match trained {
            Ok(log) => {
                log::info!(
                    "{} seed {} bucket {}: policy loss {:.5}, {} real + {} generated pairs",
                    result.label,
                    result.seed,
                    bucket.index,
                    log.policy_loss,
                    log.real_pairs,
                    log.generated_pairs
                );
                result.buckets.push(log);
            }
            Err(e) => return fail(result, e, Some(learner)),
        }
        let column = result.evaluations.len() as u64;
        result.evaluations.push(evaluate_all(&*learner, inputs.tasks, episodes, &eval_seeds.index(column)));
        seen.extend(bucket.trajectories.iter().map(|t| t.task));
        if let Some(generator) = learner.generator() {
            let qseeds = root.child("quality").index(bucket.index as u64);
            for &task in &seen {
                let Some(samples) = heldout.get(task).filter(|s| !s.is_empty()) else { continue };
                let value = generator.quality(samples, &mut qseeds.index(task as u64).rng());
                result.quality.push(QualityPoint { bucket: bucket.index, task, value });
            }
        }
    }
    if result.joint {
        // One joint fit stands in for every post-bucket evaluation point.
        let last = result.evaluations.last().cloned().expect("evaluated after training");
        result.evaluations.resize(inputs.stream.len() + 1, last);
    }
    result.completed = true;
    result.wall_clock_secs = start.elapsed().as_secs_f64();
    RunOutput { result, learner: Some(learner) }
}
