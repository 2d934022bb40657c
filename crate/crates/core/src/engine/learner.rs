//! Per-method training over one stream bucket.

use std::borrow::Cow;
use std::cell::Cell;

use serde::{Deserialize, Serialize};

use super::config::{MethodConfig, MethodKind};
use super::ewc::{estimate_fisher, ewc_train, FisherInfo};
use super::generator::{Conditioning, StateGenerator, StateSample};
use super::packnet::{packnet_step, PackNetSchedule, ParamMasks};
use super::policy::{steps_of, LabeledStep, PolicyNet};
use super::replay::{cril_generate, dgr_generate, replay_count, tdgr_generate, DynamicsNet, SyntheticTrajectory};
use crate::error::Result;
use crate::nn::{bc_train_epoch, AdamState, Checkpoint, TrainOptions};
use crate::pathworld::StreamBucket;
use crate::rng::SeedTree;

/// What a learner may know about the bucket it is trained on. Every call to
/// [`BucketContext::task_boundary`] is counted so runs can prove that a method
/// never relied on task identity.
pub struct BucketContext<'a> {
    pub index: usize,
    pub seeds: SeedTree,
    boundary: Option<usize>,
    queries: &'a Cell<usize>,
}

impl<'a> BucketContext<'a> {
    pub fn new(index: usize, seeds: SeedTree, boundary: Option<usize>, queries: &'a Cell<usize>) -> Self {
        Self { index, seeds, boundary, queries }
    }

    /// The task this bucket belongs to, when the stream has hard boundaries.
    pub fn task_boundary(&self) -> Option<usize> {
        self.queries.set(self.queries.get() + 1);
        self.boundary
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketLog {
    pub bucket: usize,
    pub real_pairs: usize,
    pub generated_pairs: usize,
    pub generated_trajectories: usize,
    pub policy_loss: f64,
    pub generator_loss: Option<f64>,
    pub dynamics_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl BucketLog {
    fn new(bucket: usize, real_pairs: usize) -> Self {
        Self {
            bucket,
            real_pairs,
            generated_pairs: 0,
            generated_trajectories: 0,
            policy_loss: 0.0,
            generator_loss: None,
            dynamics_loss: None,
            warnings: Vec::new(),
        }
    }
}

pub trait Learner: Send {
    fn train_bucket(&mut self, bucket: &StreamBucket, ctx: &BucketContext<'_>) -> Result<BucketLog>;

    /// Policy used to evaluate task `task` (0-based).
    fn policy_for(&self, task: usize) -> Cow<'_, PolicyNet>;

    /// Generator whose quality is tracked, if any.
    fn generator(&self) -> Option<&StateGenerator> {
        None
    }

    /// Synthetic data produced for the most recent bucket.
    fn last_generated(&self) -> &[SyntheticTrajectory] {
        &[]
    }

    fn checkpoint(&self) -> Checkpoint;
}

fn real_steps(bucket: &StreamBucket) -> Vec<LabeledStep> {
    bucket.trajectories.iter().flat_map(steps_of).collect()
}

fn horizon(bucket: &StreamBucket) -> usize {
    bucket.trajectories.iter().map(|t| t.len()).max().unwrap_or(0)
}

fn new_policy(cfg: &MethodConfig, task_count: usize, seeds: &SeedTree) -> Result<(PolicyNet, AdamState)> {
    let policy = PolicyNet::new(task_count, &cfg.policy_hidden, cfg.action_scale, &mut seeds.stream("policy-init"))?;
    let adam = AdamState::new(cfg.optimizer(cfg.policy_learning_rate), &policy.net);
    Ok((policy, adam))
}

fn train_policy(
    policy: &mut PolicyNet,
    adam: &mut AdamState,
    steps: &[LabeledStep],
    epochs: usize,
    batch: usize,
    seeds: &SeedTree,
) -> Result<f64> {
    let data = policy.data(steps);
    let mut rng = seeds.stream("policy");
    let mut last = 0.0;
    for _ in 0..epochs {
        last = bc_train_epoch(&mut policy.net, adam, &data, TrainOptions::new(batch), &mut rng)?.mean_loss;
    }
    Ok(last)
}

fn policy_checkpoint(kind: MethodKind, policy: &PolicyNet) -> Checkpoint {
    Checkpoint::new(serde_json::json!({
        "method": kind.tag(),
        "task_count": policy.task_count,
        "action_scale": policy.action_scale,
    }))
        .with("policy", &policy.net)
}

/// Plain behavioral cloning on each bucket (Finetune, and Multitask on the merged stream).
pub struct BcLearner {
    kind: MethodKind,
    policy: PolicyNet,
    adam: AdamState,
    epochs: usize,
    batch: usize,
}

impl BcLearner {
    pub fn new(cfg: &MethodConfig, task_count: usize, epochs: usize, seeds: &SeedTree) -> Result<Self> {
        let (policy, adam) = new_policy(cfg, task_count, seeds)?;
        Ok(Self { kind: cfg.method, policy, adam, epochs, batch: cfg.batch_size })
    }
}

impl Learner for BcLearner {
    fn train_bucket(&mut self, bucket: &StreamBucket, ctx: &BucketContext<'_>) -> Result<BucketLog> {
        let steps = real_steps(bucket);
        let mut log = BucketLog::new(ctx.index, steps.len());
        log.policy_loss = train_policy(&mut self.policy, &mut self.adam, &steps, self.epochs, self.batch, &ctx.seeds)?;
        Ok(log)
    }

    fn policy_for(&self, _task: usize) -> Cow<'_, PolicyNet> {
        Cow::Borrowed(&self.policy)
    }

    fn checkpoint(&self) -> Checkpoint {
        policy_checkpoint(self.kind, &self.policy)
    }
}

/// Online EWC: Fisher and anchor refreshed after every bucket.
pub struct EwcLearner {
    policy: PolicyNet,
    adam: AdamState,
    fisher: Option<FisherInfo>,
    lambda: f64,
    epochs: usize,
    batch: usize,
}

impl EwcLearner {
    pub fn new(cfg: &MethodConfig, task_count: usize, seeds: &SeedTree) -> Result<Self> {
        let (policy, adam) = new_policy(cfg, task_count, seeds)?;
        Ok(Self {
            policy,
            adam,
            fisher: None,
            lambda: cfg.fisher_multiplier,
            epochs: cfg.policy_epochs,
            batch: cfg.batch_size,
        })
    }

    pub fn fisher(&self) -> Option<&FisherInfo> {
        self.fisher.as_ref()
    }
}

impl Learner for EwcLearner {
    fn train_bucket(&mut self, bucket: &StreamBucket, ctx: &BucketContext<'_>) -> Result<BucketLog> {
        let steps = real_steps(bucket);
        let mut log = BucketLog::new(ctx.index, steps.len());
        let data = self.policy.data(&steps);
        let mut rng = ctx.seeds.stream("policy");
        log.policy_loss = ewc_train(
            &mut self.policy.net,
            &mut self.adam,
            self.fisher.as_ref(),
            self.lambda,
            &data,
            self.epochs,
            self.batch,
            &mut rng,
        )?;
        let diag = estimate_fisher(&self.policy.net, &data);
        self.fisher = Some(FisherInfo::absorb(self.fisher.take(), diag, self.policy.net.clone()));
        Ok(log)
    }

    fn policy_for(&self, _task: usize) -> Cow<'_, PolicyNet> {
        Cow::Borrowed(&self.policy)
    }

    fn checkpoint(&self) -> Checkpoint {
        policy_checkpoint(MethodKind::Oewc, &self.policy)
    }
}

pub struct PackNetLearner {
    policy: PolicyNet,
    adam: AdamState,
    masks: ParamMasks,
    schedule: PackNetSchedule,
    /// Set once a bucket arrives without a task boundary; evaluation then uses every mask.
    blurry: bool,
}

impl PackNetLearner {
    pub fn new(cfg: &MethodConfig, task_count: usize, seeds: &SeedTree) -> Result<Self> {
        let (policy, adam) = new_policy(cfg, task_count, seeds)?;
        let masks = ParamMasks::new(&policy.net);
        let schedule = PackNetSchedule {
            epochs: cfg.policy_epochs,
            retrain_epochs: cfg.retrain_epochs(),
            batch_size: cfg.batch_size,
            prune_fraction: cfg.prune_fraction,
        };
        Ok(Self { policy, adam, masks, schedule, blurry: false })
    }

    pub fn masks(&self) -> &ParamMasks {
        &self.masks
    }

    pub fn raw_policy(&self) -> &PolicyNet {
        &self.policy
    }
}

impl Learner for PackNetLearner {
    fn train_bucket(&mut self, bucket: &StreamBucket, ctx: &BucketContext<'_>) -> Result<BucketLog> {
        let steps = real_steps(bucket);
        let mut log = BucketLog::new(ctx.index, steps.len());
        let task = match ctx.task_boundary() {
            Some(t) => t as u32 + 1,
            None => {
                self.blurry = true;
                self.masks.tasks_done + 1
            }
        };
        let data = self.policy.data(&steps);
        let mut rng = ctx.seeds.stream("policy");
        log.policy_loss = packnet_step(
            &mut self.policy.net,
            &mut self.adam,
            &mut self.masks,
            task,
            &data,
            self.schedule,
            &mut rng,
        )?;
        Ok(log)
    }

    fn policy_for(&self, task: usize) -> Cow<'_, PolicyNet> {
        let upto = if self.blurry { u32::MAX } else { task as u32 + 1 };
        Cow::Owned(PolicyNet {
            net: self.masks.eval_network(&self.policy.net, upto),
            task_count: self.policy.task_count,
            action_scale: self.policy.action_scale,
        })
    }

    fn checkpoint(&self) -> Checkpoint {
        let ckpt = policy_checkpoint(MethodKind::Packnet, &self.policy);
        let mut meta = ckpt.meta.clone();
        meta["masks"] = serde_json::to_value(&self.masks).expect("masks serialize");
        Checkpoint { meta, ..ckpt }
    }
}

/// t-DGR (timestep-conditioned) and DGR (unconditioned) generative replay.
pub struct ReplayLearner {
    kind: MethodKind,
    policy: PolicyNet,
    adam: AdamState,
    generator: StateGenerator,
    ratio: f64,
    cfg: MethodConfig,
    generated: Vec<SyntheticTrajectory>,
}

impl ReplayLearner {
    pub fn new(cfg: &MethodConfig, task_count: usize, seeds: &SeedTree) -> Result<Self> {
        let (policy, adam) = new_policy(cfg, task_count, seeds)?;
        let conditioning = if cfg.method == MethodKind::Tdgr { Conditioning::Timestep } else { Conditioning::None };
        let generator =
            StateGenerator::new(task_count, &cfg.generator, conditioning, &mut seeds.stream("generator-init"))?
                .with_optimizer(cfg.optimizer(cfg.generator.learning_rate));
        Ok(Self {
            kind: cfg.method,
            policy,
            adam,
            generator,
            ratio: cfg.replay_ratio,
            cfg: cfg.clone(),
            generated: Vec::new(),
        })
    }
}

fn generator_steps(generator: &StateGenerator, cfg: &MethodConfig) -> usize {
    let g = &cfg.generator;
    if generator.is_trained() {
        g.train_steps
    } else {
        g.train_steps + g.warmup_steps
    }
}

impl Learner for ReplayLearner {
    fn train_bucket(&mut self, bucket: &StreamBucket, ctx: &BucketContext<'_>) -> Result<BucketLog> {
        let mut steps = real_steps(bucket);
        let mut log = BucketLog::new(ctx.index, steps.len());
        self.generated.clear();
        // Generation uses the models as they stood after the previous bucket.
        if self.generator.is_trained() {
            let n = replay_count(self.ratio, bucket.trajectories.len())?;
            let l = horizon(bucket);
            let mut rng = ctx.seeds.stream("generate");
            self.generated = match self.kind {
                MethodKind::Tdgr => tdgr_generate(&self.generator, &self.policy, n, l, &mut rng)?,
                _ => {
                    let steps = dgr_generate(&self.generator, &self.policy, n * l, &mut rng)?;
                    steps.chunks(l.max(1)).map(|c| SyntheticTrajectory { task: c[0].task, steps: c.to_vec() }).collect()
                }
            };
            log.generated_trajectories = n;
            for t in &self.generated {
                steps.extend_from_slice(&t.steps);
            }
            log.generated_pairs = steps.len() - log.real_pairs;
        }
        let samples: Vec<StateSample> =
            steps.iter().map(|s| StateSample { state: s.state, task: s.task, timestep: s.timestep }).collect();
        let n_steps = generator_steps(&self.generator, &self.cfg);
        let mut rng = ctx.seeds.stream("generator");
        log.generator_loss = Some(self.generator.train(&samples, n_steps, self.cfg.generator.batch_size, &mut rng)?);
        log.policy_loss =
            train_policy(&mut self.policy, &mut self.adam, &steps, self.cfg.policy_epochs, self.cfg.batch_size, &ctx.seeds)?;
        Ok(log)
    }

    fn policy_for(&self, _task: usize) -> Cow<'_, PolicyNet> {
        Cow::Borrowed(&self.policy)
    }

    fn generator(&self) -> Option<&StateGenerator> {
        Some(&self.generator)
    }

    fn last_generated(&self) -> &[SyntheticTrajectory] {
        &self.generated
    }

    fn checkpoint(&self) -> Checkpoint {
        let g = self.generator.checkpoint();
        let mut ckpt = policy_checkpoint(self.kind, &self.policy);
        ckpt.meta["generator"] = g.meta;
        ckpt.networks.extend(g.networks.into_iter().map(|(name, net)| (format!("generator.{name}"), net)));
        ckpt
    }
}

/// CRIL: start-state generator plus a learned dynamics model, replayed autoregressively.
pub struct CrilLearner {
    policy: PolicyNet,
    adam: AdamState,
    starts: StateGenerator,
    dynamics: DynamicsNet,
    dynamics_adam: AdamState,
    cfg: MethodConfig,
    generated: Vec<SyntheticTrajectory>,
}

impl CrilLearner {
    pub fn new(cfg: &MethodConfig, task_count: usize, seeds: &SeedTree) -> Result<Self> {
        let (policy, adam) = new_policy(cfg, task_count, seeds)?;
        let starts = StateGenerator::new(task_count, &cfg.generator, Conditioning::None, &mut seeds.stream("generator-init"))?
            .with_optimizer(cfg.optimizer(cfg.generator.learning_rate));
        let dynamics = DynamicsNet::new(&cfg.dynamics_hidden, cfg.action_scale, &mut seeds.stream("dynamics-init"))?;
        let dynamics_adam = AdamState::new(cfg.optimizer(cfg.policy_learning_rate), &dynamics.net);
        Ok(Self { policy, adam, starts, dynamics, dynamics_adam, cfg: cfg.clone(), generated: Vec::new() })
    }
}

impl Learner for CrilLearner {
    fn train_bucket(&mut self, bucket: &StreamBucket, ctx: &BucketContext<'_>) -> Result<BucketLog> {
        let real: Vec<Vec<LabeledStep>> = bucket.trajectories.iter().map(|t| steps_of(t).collect()).collect();
        let real_pairs = real.iter().map(Vec::len).sum();
        let mut log = BucketLog::new(ctx.index, real_pairs);
        self.generated.clear();
        if self.starts.is_trained() {
            let n = replay_count(self.cfg.replay_ratio, bucket.trajectories.len())?;
            let mut rng = ctx.seeds.stream("generate");
            let rollout = cril_generate(&self.starts, &self.dynamics, &self.policy, n, horizon(bucket), None, &mut rng)?;
            if let Some(step) = rollout.truncated_at {
                log.warnings.push(format!("replay rollout truncated at step {step} (non-finite state)"));
            }
            self.generated = rollout.trajectories;
            log.generated_trajectories = n;
        }
        let all: Vec<&[LabeledStep]> =
            real.iter().map(Vec::as_slice).chain(self.generated.iter().map(|t| t.steps.as_slice())).collect();
        let steps: Vec<LabeledStep> = all.iter().flat_map(|s| s.iter().copied()).collect();
        log.generated_pairs = steps.len() - real_pairs;

        let starts: Vec<StateSample> = all
            .iter()
            .filter_map(|s| s.first())
            .map(|s| StateSample { state: s.state, task: s.task, timestep: 1 })
            .collect();
        let n_steps = generator_steps(&self.starts, &self.cfg);
        let mut rng = ctx.seeds.stream("generator");
        log.generator_loss = Some(self.starts.train(&starts, n_steps, self.cfg.generator.batch_size, &mut rng)?);

        let dyn_data = self.dynamics.data(&all);
        let mut rng = ctx.seeds.stream("dynamics");
        let mut last = 0.0;
        for _ in 0..self.cfg.policy_epochs {
            last = bc_train_epoch(
                &mut self.dynamics.net,
                &mut self.dynamics_adam,
                &dyn_data,
                TrainOptions::new(self.cfg.batch_size),
                &mut rng,
            )?
            .mean_loss;
        }
        log.dynamics_loss = Some(last);
        log.policy_loss =
            train_policy(&mut self.policy, &mut self.adam, &steps, self.cfg.policy_epochs, self.cfg.batch_size, &ctx.seeds)?;
        Ok(log)
    }

    fn policy_for(&self, _task: usize) -> Cow<'_, PolicyNet> {
        Cow::Borrowed(&self.policy)
    }

    fn last_generated(&self) -> &[SyntheticTrajectory] {
        &self.generated
    }

    fn checkpoint(&self) -> Checkpoint {
        let g = self.starts.checkpoint();
        let mut ckpt = policy_checkpoint(MethodKind::Cril, &self.policy).with("dynamics", &self.dynamics.net);
        ckpt.meta["start_generator"] = g.meta;
        ckpt.networks.extend(g.networks.into_iter().map(|(name, net)| (format!("start_generator.{name}"), net)));
        ckpt
    }
}

/// Constructs the learner for `cfg.method`. Multitask is a BC learner that
/// the orchestrator feeds the merged stream once.
pub fn build_learner(cfg: &MethodConfig, task_count: usize, seeds: &SeedTree) -> Result<Box<dyn Learner>> {
    Ok(match cfg.method {
        MethodKind::Finetune => Box::new(BcLearner::new(cfg, task_count, cfg.policy_epochs, seeds)?),
        MethodKind::Multitask => Box::new(BcLearner::new(cfg, task_count, cfg.multitask_epochs, seeds)?),
        MethodKind::Oewc => Box::new(EwcLearner::new(cfg, task_count, seeds)?),
        MethodKind::Packnet => Box::new(PackNetLearner::new(cfg, task_count, seeds)?),
        MethodKind::Tdgr | MethodKind::Dgr => Box::new(ReplayLearner::new(cfg, task_count, seeds)?),
        MethodKind::Cril => Box::new(CrilLearner::new(cfg, task_count, seeds)?),
    })
}
