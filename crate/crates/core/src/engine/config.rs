use serde::{Deserialize, Serialize};

use super::generator::GeneratorConfig;
use crate::error::{Error, Result};
use crate::nn::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Tdgr,
    Dgr,
    Cril,
    Finetune,
    Multitask,
    Oewc,
    Packnet,
}

impl MethodKind {
    pub const ALL: [MethodKind; 7] = [
        MethodKind::Finetune,
        MethodKind::Multitask,
        MethodKind::Oewc,
        MethodKind::Packnet,
        MethodKind::Dgr,
        MethodKind::Cril,
        MethodKind::Tdgr,
    ];

    /// Short identifier used in paths and CSV files.
    pub fn tag(self) -> &'static str {
        match self {
            MethodKind::Tdgr => "tdgr",
            MethodKind::Dgr => "dgr",
            MethodKind::Cril => "cril",
            MethodKind::Finetune => "finetune",
            MethodKind::Multitask => "multitask",
            MethodKind::Oewc => "oewc",
            MethodKind::Packnet => "packnet",
        }
    }

    /// Name used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            MethodKind::Tdgr => "t-DGR",
            MethodKind::Dgr => "DGR",
            MethodKind::Cril => "CRIL",
            MethodKind::Finetune => "Finetune",
            MethodKind::Multitask => "Multitask",
            MethodKind::Oewc => "oEWC",
            MethodKind::Packnet => "PackNet",
        }
    }

    pub fn uses_replay_ratio(self) -> bool {
        matches!(self, MethodKind::Tdgr | MethodKind::Dgr | MethodKind::Cril)
    }

    pub fn parse(s: &str) -> Option<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '_'], "");
        Self::ALL.into_iter().find(|m| m.tag() == key)
    }
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Hyperparameters of one continual-learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodConfig {
    pub method: MethodKind,
    /// Fraction of training samples that are generated, in `[0, 1)`.
    pub replay_ratio: f64,
    pub policy_epochs: usize,
    pub multitask_epochs: usize,
    pub batch_size: usize,
    pub policy_hidden: Vec<usize>,
    pub policy_learning_rate: f64,
    /// Actions are regressed in units of this displacement.
    pub action_scale: f64,
    pub generator: GeneratorConfig,
    pub dynamics_hidden: Vec<usize>,
    pub fisher_multiplier: f64,
    pub prune_fraction: f64,
    /// Defaults to half of `policy_epochs`.
    pub retrain_epochs: Option<usize>,
    pub eval_episodes: usize,
    /// Adam moments, shared by every network in the run.
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub weight_decay: f64,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            method: MethodKind::Tdgr,
            replay_ratio: 0.9,
            policy_epochs: 50,
            multitask_epochs: 50,
            batch_size: 32,
            policy_hidden: vec![128, 128, 128],
            policy_learning_rate: 1e-3,
            action_scale: 0.03,
            generator: GeneratorConfig::default(),
            dynamics_hidden: vec![128, 128],
            fisher_multiplier: 100.0,
            prune_fraction: 0.75,
            retrain_epochs: None,
            eval_episodes: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl MethodConfig {
    pub fn for_method(method: MethodKind) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn optimizer(&self, learning_rate: f64) -> AdamConfig {
        AdamConfig {
            learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
            weight_decay: self.weight_decay,
        }
    }

    pub fn retrain_epochs(&self) -> usize {
        self.retrain_epochs.unwrap_or(self.policy_epochs / 2)
    }

    /// Directory-friendly label, e.g. `tdgr_r0.9`.
    pub fn label(&self) -> String {
        if self.method.uses_replay_ratio() {
            format!("{}_r{}", self.method.tag(), self.replay_ratio)
        } else {
            self.method.tag().to_string()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.replay_ratio) {
            return Err(Error::config(format!("replay_ratio must lie in [0, 1), got {}", self.replay_ratio)));
        }
        let positive = [
            ("policy_epochs", self.policy_epochs),
            ("multitask_epochs", self.multitask_epochs),
            ("batch_size", self.batch_size),
            ("eval_episodes", self.eval_episodes),
            ("generator.train_steps", self.generator.train_steps),
            ("generator.batch_size", self.generator.batch_size),
            ("generator.diffusion_timesteps", self.generator.diffusion_timesteps),
            ("generator.embed_dim", self.generator.embed_dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if !self.generator.embed_dim.is_multiple_of(2) {
            return Err(Error::config("generator.embed_dim must be even"));
        }
        if !(self.prune_fraction > 0.0 && self.prune_fraction < 1.0) {
            return Err(Error::config(format!("prune_fraction must lie in (0, 1), got {}", self.prune_fraction)));
        }
        if !(self.fisher_multiplier >= 0.0 && self.fisher_multiplier.is_finite()) {
            return Err(Error::config("fisher_multiplier must be finite and nonnegative"));
        }
        for (name, lr) in [
            ("policy_learning_rate", self.policy_learning_rate),
            ("generator.learning_rate", self.generator.learning_rate),
            ("action_scale", self.action_scale),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2)) {
            return Err(Error::config("adam betas must lie in [0, 1)"));
        }
        if !(self.adam_epsilon > 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::config("adam_epsilon must be positive and weight_decay nonnegative"));
        }
        if self.policy_hidden.contains(&0) || self.generator.hidden.contains(&0) || self.dynamics_hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        Ok(())
    }
}
