//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{GeneratorConfig, MethodConfig, MethodKind};
use crate::error::{Error, Result};
use crate::pathworld::{StreamMode, TaskParams};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// The benchmark instance. Tasks and datasets are fixed by `seed` and shared
/// by every run of the experiment; run seeds only affect learning and
/// evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub tasks: usize,
    pub waypoints: usize,
    pub demos_per_task: usize,
    /// Trajectories per task kept aside for generation-quality tracking.
    pub heldout_per_task: usize,
    pub horizon: usize,
    pub noise: f64,
    pub speed: f64,
    pub capture_radius: f64,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let p = TaskParams::default();
        Self {
            tasks: 5,
            waypoints: p.waypoints,
            demos_per_task: 100,
            heldout_per_task: 20,
            horizon: p.horizon,
            noise: p.noise,
            speed: p.speed,
            capture_radius: p.capture_radius,
            seed: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn task_params(&self) -> TaskParams {
        TaskParams {
            waypoints: self.waypoints,
            speed: self.speed,
            noise: self.noise,
            capture_radius: self.capture_radius,
            horizon: self.horizon,
            ..TaskParams::default()
        }
    }
}

/// Learner budgets shared by all methods of an experiment. Defaults are the
/// desk-scale values; [`HYPERPARAMETERS`] lists the reference ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budgets {
    pub policy_epochs: usize,
    pub multitask_epochs: usize,
    pub batch_size: usize,
    pub policy_hidden: Vec<usize>,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub weight_decay: f64,
    pub action_scale: f64,
    pub generator: GeneratorConfig,
    pub dynamics_hidden: Vec<usize>,
    pub fisher_multiplier: f64,
    pub prune_fraction: f64,
    pub retrain_epochs: Option<usize>,
    pub eval_episodes: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        let m = MethodConfig::default();
        Self {
            policy_epochs: m.policy_epochs,
            multitask_epochs: m.multitask_epochs,
            batch_size: m.batch_size,
            policy_hidden: m.policy_hidden,
            learning_rate: m.policy_learning_rate,
            adam_beta1: m.adam_beta1,
            adam_beta2: m.adam_beta2,
            adam_epsilon: m.adam_epsilon,
            weight_decay: m.weight_decay,
            action_scale: m.action_scale,
            generator: m.generator,
            dynamics_hidden: m.dynamics_hidden,
            fisher_multiplier: m.fisher_multiplier,
            prune_fraction: m.prune_fraction,
            retrain_epochs: m.retrain_epochs,
            eval_episodes: m.eval_episodes,
        }
    }
}

impl Budgets {
    pub fn method_config(&self, method: MethodKind, replay_ratio: f64) -> MethodConfig {
        MethodConfig {
            method,
            replay_ratio: if method.uses_replay_ratio() { replay_ratio } else { 0.0 },
            policy_epochs: self.policy_epochs,
            multitask_epochs: self.multitask_epochs,
            batch_size: self.batch_size,
            policy_hidden: self.policy_hidden.clone(),
            policy_learning_rate: self.learning_rate,
            action_scale: self.action_scale,
            generator: self.generator.clone(),
            dynamics_hidden: self.dynamics_hidden.clone(),
            fisher_multiplier: self.fisher_multiplier,
            prune_fraction: self.prune_fraction,
            retrain_epochs: self.retrain_epochs,
            eval_episodes: self.eval_episodes,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_epsilon: self.adam_epsilon,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_stream")]
    pub stream: StreamMode,
    pub methods: Vec<MethodKind>,
    /// Ratios used by replay methods; each ratio is a separate run.
    #[serde(default = "default_ratios")]
    pub replay_ratios: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Train single-task references so forward transfer can be reported.
    #[serde(default = "default_true")]
    pub forward_transfer: bool,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
    #[serde(default)]
    pub budgets: Budgets,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_stream() -> StreamMode {
    StreamMode::Sequential
}

fn default_ratios() -> Vec<f64> {
    vec![0.9]
}

fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(methods: Vec<MethodKind>) -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            output_dir: default_output_dir(),
            stream: default_stream(),
            methods,
            replay_ratios: default_ratios(),
            seeds: default_seeds(),
            forward_transfer: true,
            benchmark: BenchmarkConfig::default(),
            budgets: Budgets::default(),
        }
    }

    /// Parses and validates; errors name the offending line where possible.
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(src).map_err(|e| Error::config(e.to_string().trim_end()))?;
        cfg.validate().map_err(|e| match e {
            Error::Config(msg) => {
                let key = msg.split_whitespace().next().unwrap_or_default();
                match line_of_key(src, key) {
                    Some(line) => Error::config(format!("line {line}: {msg}")),
                    None => Error::Config(msg),
                }
            }
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::from_toml_str(&src).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    /// Semantic checks. Messages start with the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::config(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must not be empty"));
        }
        if self.replay_ratios.is_empty() || self.replay_ratios.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::config("replay_ratios must be a nonempty list of values in [0, 1)"));
        }
        let b = &self.benchmark;
        if b.tasks < 2 {
            return Err(Error::config("tasks must be at least 2"));
        }
        if b.demos_per_task == 0 {
            return Err(Error::config("demos_per_task must be positive"));
        }
        if b.waypoints < 2 || b.horizon < 2 {
            return Err(Error::config("waypoints and horizon must be at least 2"));
        }
        if self.stream == StreamMode::Blurry && b.demos_per_task < 3 {
            return Err(Error::config("demos_per_task must be at least 3 for a blurry stream"));
        }
        for method in &self.methods {
            for &r in &self.replay_ratios {
                self.budgets.method_config(*method, r).validate()?;
            }
        }
        Ok(())
    }

    /// Every (method, ratio) combination to run, in a stable order.
    pub fn method_configs(&self) -> Vec<MethodConfig> {
        let mut out = Vec::new();
        for &m in &self.methods {
            if m.uses_replay_ratio() {
                out.extend(self.replay_ratios.iter().map(|&r| self.budgets.method_config(m, r)));
            } else {
                out.push(self.budgets.method_config(m, 0.0));
            }
        }
        out
    }
}

fn line_of_key(src: &str, key: &str) -> Option<usize> {
    let key = key.rsplit('.').next()?;
    if key.is_empty() {
        return None;
    }
    src.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

/// A tunable with its reference and shipped values.
#[derive(Debug, Clone, Copy)]
pub struct Hyperparameter {
    pub key: &'static str,
    pub reference: &'static str,
    pub shipped: &'static str,
    pub description: &'static str,
}

/// Reference learner settings next to the desk-scale defaults used here.
pub const HYPERPARAMETERS: &[Hyperparameter] = &[
    Hyperparameter { key: "budgets.batch_size", reference: "32", shipped: "32", description: "samples per training iteration" },
    Hyperparameter { key: "budgets.policy_epochs", reference: "250 (t-DGR, CRIL: 300)", shipped: "50", description: "passes over each bucket" },
    Hyperparameter { key: "budgets.multitask_epochs", reference: "500", shipped: "50", description: "passes over the joint dataset" },
    Hyperparameter { key: "budgets.learning_rate", reference: "1e-4", shipped: "1e-3", description: "Adam step size for policy and dynamics" },
    Hyperparameter { key: "budgets.adam_beta1", reference: "0.9", shipped: "0.9", description: "first-moment decay" },
    Hyperparameter { key: "budgets.adam_beta2", reference: "0.999", shipped: "0.999", description: "second-moment decay" },
    Hyperparameter { key: "budgets.adam_epsilon", reference: "1e-8", shipped: "1e-8", description: "numerical stability constant" },
    Hyperparameter { key: "budgets.weight_decay", reference: "0", shipped: "0", description: "weight regularization" },
    Hyperparameter { key: "budgets.policy_hidden", reference: "[512, 512, 512, 512]", shipped: "[128, 128, 128]", description: "learner hidden widths" },
    Hyperparameter { key: "budgets.fisher_multiplier", reference: "100", shipped: "100", description: "oEWC penalty scale" },
    Hyperparameter { key: "budgets.prune_fraction", reference: "0.75", shipped: "0.75", description: "PackNet share of free weights pruned per task" },
    Hyperparameter { key: "budgets.retrain_epochs", reference: "125", shipped: "policy_epochs / 2", description: "PackNet epochs after pruning" },
    Hyperparameter { key: "budgets.generator.train_steps", reference: "10000", shipped: "2000", description: "diffusion steps per bucket" },
    Hyperparameter { key: "budgets.generator.warmup_steps", reference: "50000", shipped: "5000", description: "extra diffusion steps on the first bucket" },
    Hyperparameter { key: "budgets.generator.diffusion_timesteps", reference: "1000", shipped: "1000", description: "diffusion chain length" },
    Hyperparameter { key: "budgets.generator.learning_rate", reference: "1e-4", shipped: "1e-3", description: "Adam step size for the denoiser" },
    Hyperparameter { key: "replay_ratios", reference: "[0.9]", shipped: "[0.9]", description: "share of training samples that are generated" },
    Hyperparameter { key: "benchmark.demos_per_task", reference: "100", shipped: "100", description: "expert trajectories per task" },
    Hyperparameter { key: "seeds", reference: "[1, 2, 3, 4, 5]", shipped: "[1, 2, 3, 4, 5]", description: "run seeds" },
];
