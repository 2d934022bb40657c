use ndarray::Array2;
use rand::Rng;

use crate::error::Result;
use crate::nn::{BcData, Mlp};
use crate::pathworld::{Observation, Point, Policy, TaskSpec, Trajectory};

/// One state-action pair tagged with its task and 1-based trajectory timestep.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LabeledStep {
    pub timestep: usize,
    pub task: usize,
    pub state: Point,
    pub action: Point,
}

pub fn steps_of(traj: &Trajectory) -> impl Iterator<Item = LabeledStep> + '_ {
    traj.states.iter().zip(&traj.actions).enumerate().map(|(j, (s, a))| LabeledStep {
        timestep: j + 1,
        task: traj.task,
        state: *s,
        action: *a,
    })
}

/// Learner network over `state ⊕ one-hot(task)`. The network regresses
/// actions divided by `action_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub net: Mlp,
    pub task_count: usize,
    pub action_scale: f64,
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(task_count: usize, hidden: &[usize], action_scale: f64, rng: &mut R) -> Result<Self> {
        if !(action_scale > 0.0 && action_scale.is_finite()) {
            return Err(crate::Error::config("action scale must be positive"));
        }
        let mut sizes = vec![2 + task_count];
        sizes.extend_from_slice(hidden);
        sizes.push(2);
        Ok(Self { net: Mlp::init(&sizes, rng)?, task_count, action_scale })
    }

    /// Training pairs in the network's normalized action units.
    pub fn data(&self, steps: &[LabeledStep]) -> BcData {
        bc_data(steps, self.task_count, self.action_scale)
    }

    pub fn inputs(&self, rows: impl ExactSizeIterator<Item = (Point, usize)>) -> Array2<f64> {
        encode_inputs(rows, self.task_count)
    }

    /// Actions for `(state, task)` pairs.
    pub fn actions(&self, rows: impl ExactSizeIterator<Item = (Point, usize)>) -> Vec<Point> {
        let x = self.inputs(rows);
        let y = self.net.forward(x.view());
        let k = self.action_scale;
        y.rows().into_iter().map(|r| [r[0] * k, r[1] * k]).collect()
    }
}

pub fn encode_inputs(rows: impl ExactSizeIterator<Item = (Point, usize)>, task_count: usize) -> Array2<f64> {
    let mut x = Array2::zeros((rows.len(), 2 + task_count));
    for (n, (s, task)) in rows.enumerate() {
        x[[n, 0]] = s[0];
        x[[n, 1]] = s[1];
        x[[n, 2 + task]] = 1.0;
    }
    x
}

pub fn bc_data(steps: &[LabeledStep], task_count: usize, action_scale: f64) -> BcData {
    let inputs = encode_inputs(steps.iter().map(|s| (s.state, s.task)), task_count);
    let mut targets = Array2::zeros((steps.len(), 2));
    for (n, s) in steps.iter().enumerate() {
        targets[[n, 0]] = s.action[0] / action_scale;
        targets[[n, 1]] = s.action[1] / action_scale;
    }
    BcData::new(inputs, targets).expect("row counts match")
}

impl Policy for PolicyNet {
    fn act(&self, _task: &TaskSpec, obs: &[Observation]) -> Vec<Point> {
        self.actions(obs.iter().map(|o| (o.state, o.task)))
    }
}

/// Assigns actions to observations without running an environment.
pub trait ActionLabeler {
    fn label(&self, obs: &[Observation]) -> Vec<Point>;
}

impl ActionLabeler for PolicyNet {
    fn label(&self, obs: &[Observation]) -> Vec<Point> {
        self.actions(obs.iter().map(|o| (o.state, o.task)))
    }
}

/// The scripted expert as a labeler; needs progress-tracked observations.
pub struct ExpertLabeler<'a> {
    pub tasks: &'a [TaskSpec],
}

impl ActionLabeler for ExpertLabeler<'_> {
    fn label(&self, obs: &[Observation]) -> Vec<Point> {
        obs.iter()
            .map(|o| crate::pathworld::Expert::action(&self.tasks[o.task], o.state, o.next_waypoint))
            .collect()
    }
}
