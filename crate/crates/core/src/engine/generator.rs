//! Diffusion generator over `[state ‖ task block]` samples.
//!
//! Samples are mapped to `[-1, 1]` before diffusion (`2x − 1` for both the
//! position and the one-hot block). The generated task block is projected back
//! to a task id by argmax.

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    generate_batch, noise_error, train_denoiser, Denoiser, DiffusionSchedule, ErrorNorm,
};
use crate::error::Result;
use crate::nn::{AdamConfig, AdamState, Checkpoint};
use crate::pathworld::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub diffusion_timesteps: usize,
    pub train_steps: usize,
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128, 128],
            embed_dim: 16,
            diffusion_timesteps: 1000,
            train_steps: 2000,
            warmup_steps: 5000,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Conditioning {
    /// Conditioned on the trajectory timestep (t-DGR).
    Timestep,
    /// Timestep replaced by a constant (DGR, CRIL start states).
    None,
}

/// A state sample with its task and conditioning timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSample {
    pub state: Point,
    pub task: usize,
    pub timestep: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateGenerator {
    pub denoiser: Denoiser,
    pub schedule: DiffusionSchedule,
    pub adam: AdamState,
    pub task_count: usize,
    pub conditioning: Conditioning,
    trained: bool,
}

const CHUNK: usize = 4096;

impl StateGenerator {
    pub fn new<R: Rng + ?Sized>(
        task_count: usize,
        cfg: &GeneratorConfig,
        conditioning: Conditioning,
        rng: &mut R,
    ) -> Result<Self> {
        let denoiser = Denoiser::new(2 + task_count, cfg.embed_dim, &cfg.hidden, rng)?;
        let adam = AdamState::new(AdamConfig::default().with_learning_rate(cfg.learning_rate), &denoiser.net);
        Ok(Self {
            denoiser,
            schedule: DiffusionSchedule::cosine(cfg.diffusion_timesteps)?,
            adam,
            task_count,
            conditioning,
            trained: false,
        })
    }

    /// Replaces the optimizer, discarding any accumulated moments.
    pub fn with_optimizer(mut self, config: AdamConfig) -> Self {
        self.adam = AdamState::new(config, &self.denoiser.net);
        self
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn sample_dim(&self) -> usize {
        2 + self.task_count
    }

    fn condition(&self, timestep: usize) -> usize {
        match self.conditioning {
            Conditioning::Timestep => timestep,
            Conditioning::None => 0,
        }
    }

    pub fn encode(&self, samples: &[StateSample]) -> (Array2<f64>, Vec<usize>) {
        let mut x = Array2::from_elem((samples.len(), self.sample_dim()), -1.0);
        for (n, s) in samples.iter().enumerate() {
            x[[n, 0]] = 2.0 * s.state[0] - 1.0;
            x[[n, 1]] = 2.0 * s.state[1] - 1.0;
            x[[n, 2 + s.task]] = 1.0;
        }
        let js = samples.iter().map(|s| self.condition(s.timestep)).collect();
        (x, js)
    }

    fn decode_row(&self, row: ndarray::ArrayView1<f64>) -> (Point, usize) {
        let state = [(row[0] + 1.0) / 2.0, (row[1] + 1.0) / 2.0];
        let task = row
            .iter()
            .skip(2)
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        (state, task)
    }

    /// Trains for `steps` minibatch updates; returns the mean loss.
    pub fn train<R: Rng + ?Sized>(&mut self, data: &[StateSample], steps: usize, batch: usize, rng: &mut R) -> Result<f64> {
        let (x, js) = self.encode(data);
        let loss = train_denoiser(&mut self.denoiser, &mut self.adam, x.view(), &js, steps, batch, &self.schedule, rng)?;
        self.trained = true;
        Ok(loss)
    }

    /// One sample per requested timestep, returned in request order.
    pub fn sample<R: Rng + ?Sized>(&self, timesteps: &[usize], rng: &mut R) -> Result<Vec<StateSample>> {
        let mut out = Vec::with_capacity(timesteps.len());
        for chunk in timesteps.chunks(CHUNK) {
            let js: Vec<usize> = chunk.iter().map(|&j| self.condition(j)).collect();
            let x = generate_batch(&self.denoiser, &js, &self.schedule, rng)?;
            for (row, &j) in x.axis_iter(Axis(0)).zip(chunk) {
                let (state, task) = self.decode_row(row);
                out.push(StateSample { state, task, timestep: j });
            }
        }
        Ok(out)
    }

    /// Mean L1 noise-prediction error on held-out samples (lower is better).
    pub fn quality<R: Rng + ?Sized>(&self, heldout: &[StateSample], rng: &mut R) -> f64 {
        let (x, js) = self.encode(heldout);
        noise_error(&self.denoiser, x.view(), &js, &self.schedule, ErrorNorm::L1, rng)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(serde_json::json!({
            "schedule": self.schedule.descriptor(),
            "embed_dim": self.denoiser.embed_dim(),
            "task_count": self.task_count,
            "conditioning": self.conditioning,
        }))
        .with("denoiser", &self.denoiser.net)
    }
}
