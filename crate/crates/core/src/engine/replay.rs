//! Synthetic replay: t-DGR, DGR and CRIL generation.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::generator::{StateGenerator, StateSample};
use super::policy::{ActionLabeler, LabeledStep};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::pathworld::{transition, Observation, Point, Progress, TaskSpec};

/// Number of synthetic trajectories `n` so that synthetic data makes up a
/// fraction `ratio` of the combined set: `n = round(r·|D| / (1 − r))`.
pub fn replay_count(ratio: f64, real: usize) -> Result<usize> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::config(format!("replay ratio must lie in [0, 1), got {ratio}")));
    }
    Ok((ratio * real as f64 / (1.0 - ratio)).round() as usize)
}

/// A generated sequence of labeled steps for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrajectory {
    pub task: usize,
    pub steps: Vec<LabeledStep>,
}

impl SyntheticTrajectory {
    pub fn states(&self) -> Vec<Point> {
        self.steps.iter().map(|s| s.state).collect()
    }
}

fn label_samples(samples: &[StateSample], labeler: &dyn ActionLabeler) -> Vec<LabeledStep> {
    let obs: Vec<Observation> = samples
        .iter()
        .map(|s| Observation { state: s.state, task: s.task, next_waypoint: 0 })
        .collect();
    labeler
        .label(&obs)
        .into_iter()
        .zip(samples)
        .map(|(action, s)| LabeledStep { timestep: s.timestep, task: s.task, state: s.state, action })
        .collect()
}

/// t-DGR replay: `n` samples at every timestep `1..=horizon`, each labeled by
/// `labeler`. Trajectory `i` collects the `i`-th sample at each timestep; these
/// are independent draws, so the grouping is only for bookkeeping. The task
/// reported for a trajectory is the task of its first step.
pub fn tdgr_generate<R: Rng + ?Sized>(
    generator: &StateGenerator,
    labeler: &dyn ActionLabeler,
    n: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<SyntheticTrajectory>> {
    let timesteps: Vec<usize> = (1..=horizon).flat_map(|j| std::iter::repeat_n(j, n)).collect();
    let samples = generator.sample(&timesteps, rng)?;
    let labeled = label_samples(&samples, labeler);
    let mut trajs: Vec<SyntheticTrajectory> = (0..n)
        .map(|_| SyntheticTrajectory { task: 0, steps: Vec::with_capacity(horizon) })
        .collect();
    for (k, step) in labeled.into_iter().enumerate() {
        trajs[k % n.max(1)].steps.push(step);
    }
    for t in &mut trajs {
        t.task = t.steps.first().map_or(0, |s| s.task);
    }
    Ok(trajs)
}

/// DGR replay: `count` i.i.d. state samples from an unconditioned generator.
pub fn dgr_generate<R: Rng + ?Sized>(
    generator: &StateGenerator,
    labeler: &dyn ActionLabeler,
    count: usize,
    rng: &mut R,
) -> Result<Vec<LabeledStep>> {
    let samples = generator.sample(&vec![0; count], rng)?;
    Ok(label_samples(&samples, labeler))
}

/// Source of CRIL start states.
pub trait StartSampler {
    fn sample_starts(&self, n: usize, rng: &mut dyn RngCore) -> Result<Vec<(Point, usize)>>;
}

impl StartSampler for StateGenerator {
    fn sample_starts(&self, n: usize, rng: &mut dyn RngCore) -> Result<Vec<(Point, usize)>> {
        Ok(self.sample(&vec![1; n], rng)?.into_iter().map(|s| (s.state, s.task)).collect())
    }
}

/// Batched one-step state transition model.
pub trait Dynamics {
    fn step(&self, states: &[Point], actions: &[Point], rng: &mut dyn RngCore) -> Vec<Point>;
}

/// Learned residual dynamics `s' = s + scale·f(s, a/scale)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsNet {
    pub net: Mlp,
    pub scale: f64,
}

impl DynamicsNet {
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], scale: f64, rng: &mut R) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::config("dynamics scale must be positive"));
        }
        let mut sizes = vec![4];
        sizes.extend_from_slice(hidden);
        sizes.push(2);
        Ok(Self { net: Mlp::init(&sizes, rng)?, scale })
    }

    fn inputs(&self, states: &[Point], actions: &[Point]) -> ndarray::Array2<f64> {
        let mut x = ndarray::Array2::zeros((states.len(), 4));
        for (n, (s, a)) in states.iter().zip(actions).enumerate() {
            x[[n, 0]] = s[0];
            x[[n, 1]] = s[1];
            x[[n, 2]] = a[0] / self.scale;
            x[[n, 3]] = a[1] / self.scale;
        }
        x
    }

    /// Regression data from consecutive steps; targets are `(s_{j+1} − s_j)/scale`.
    pub fn data(&self, trajs: &[&[LabeledStep]]) -> crate::nn::BcData {
        let (mut s, mut a, mut d) = (Vec::new(), Vec::new(), Vec::new());
        for steps in trajs {
            for w in steps.windows(2) {
                s.push(w[0].state);
                a.push(w[0].action);
                d.push([w[1].state[0] - w[0].state[0], w[1].state[1] - w[0].state[1]]);
            }
        }
        let x = self.inputs(&s, &a);
        let y = ndarray::Array2::from_shape_fn((d.len(), 2), |(i, k)| d[i][k] / self.scale);
        crate::nn::BcData::new(x, y).expect("row counts match")
    }
}

impl Dynamics for DynamicsNet {
    fn step(&self, states: &[Point], actions: &[Point], _rng: &mut dyn RngCore) -> Vec<Point> {
        let delta = self.net.forward(self.inputs(states, actions).view());
        let k = self.scale;
        states
            .iter()
            .zip(delta.rows())
            .map(|(s, d)| [s[0] + k * d[0], s[1] + k * d[1]])
            .collect()
    }
}

/// The true environment transition.
#[derive(Debug, Clone, Copy)]
pub struct OracleDynamics {
    pub noise: f64,
    pub max_action: f64,
}

impl Dynamics for OracleDynamics {
    fn step(&self, states: &[Point], actions: &[Point], rng: &mut dyn RngCore) -> Vec<Point> {
        states
            .iter()
            .zip(actions)
            .map(|(s, a)| transition(*s, *a, self.noise, self.max_action, rng))
            .collect()
    }
}

/// Wraps a model so each step independently jumps by `jump` in a uniformly
/// random direction with probability `prob`.
pub struct CorruptedDynamics<D> {
    pub inner: D,
    pub prob: f64,
    pub jump: f64,
}

impl<D: Dynamics> Dynamics for CorruptedDynamics<D> {
    fn step(&self, states: &[Point], actions: &[Point], rng: &mut dyn RngCore) -> Vec<Point> {
        let mut next = self.inner.step(states, actions, rng);
        for s in &mut next {
            if rng.random::<f64>() < self.prob {
                let (u, v): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                let norm = u.hypot(v).max(f64::MIN_POSITIVE);
                s[0] += self.jump * u / norm;
                s[1] += self.jump * v / norm;
            }
        }
        next
    }
}

/// Output of [`cril_generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct CrilRollout {
    pub trajectories: Vec<SyntheticTrajectory>,
    /// Set when a non-finite state appeared; trajectories stop before that step.
    pub truncated_at: Option<usize>,
}

/// CRIL replay: start states from `starts`, then autoregressive rollout of
/// `labeler` through `dynamics` for `horizon` states. When `tasks` is given,
/// observations carry in-order waypoint progress (needed by the expert).
pub fn cril_generate(
    starts: &dyn StartSampler,
    dynamics: &dyn Dynamics,
    labeler: &dyn ActionLabeler,
    n: usize,
    horizon: usize,
    tasks: Option<&[TaskSpec]>,
    rng: &mut dyn RngCore,
) -> Result<CrilRollout> {
    let init = starts.sample_starts(n, rng)?;
    let task_ids: Vec<usize> = init.iter().map(|s| s.1).collect();
    let mut states: Vec<Point> = init.iter().map(|s| s.0).collect();
    let mut progress = vec![Progress::start(); n];
    let mut trajectories: Vec<SyntheticTrajectory> = task_ids
        .iter()
        .map(|&task| SyntheticTrajectory { task, steps: Vec::with_capacity(horizon) })
        .collect();
    for j in 1..=horizon {
        if states.iter().any(|s| !s[0].is_finite() || !s[1].is_finite()) {
            log::warn!("CRIL rollout produced a non-finite state at step {j}; truncating");
            return Ok(CrilRollout { trajectories, truncated_at: Some(j) });
        }
        if let Some(specs) = tasks {
            for ((p, s), &k) in progress.iter_mut().zip(&states).zip(&task_ids) {
                p.update(&specs[k], *s);
            }
        }
        let obs: Vec<Observation> = states
            .iter()
            .zip(&task_ids)
            .zip(&progress)
            .map(|((s, &task), p)| Observation { state: *s, task, next_waypoint: p.next_waypoint })
            .collect();
        let actions = labeler.label(&obs);
        for ((t, s), a) in trajectories.iter_mut().zip(&states).zip(&actions) {
            t.steps.push(LabeledStep { timestep: j, task: t.task, state: *s, action: *a });
        }
        if j < horizon {
            states = dynamics.step(&states, &actions, rng);
        }
    }
    Ok(CrilRollout { trajectories, truncated_at: None })
}
