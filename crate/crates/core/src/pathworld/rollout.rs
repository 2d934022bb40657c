//! Episodes, the scripted expert and policy evaluation.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dynamics::transition;
use super::task::{dist, Point, TaskSpec};
use crate::error::{Error, Result};
use crate::rng::{SeedTree, StreamRng};

/// Fixed-length demonstration; after success the agent holds position with
/// zero actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task: usize,
    pub states: Vec<Point>,
    pub actions: Vec<Point>,
    pub success: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// What a policy sees at one step. `next_waypoint` is privileged progress
/// information; learned policies ignore it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub state: Point,
    pub task: usize,
    pub next_waypoint: usize,
}

pub trait Policy: Sync {
    fn act(&self, task: &TaskSpec, obs: &[Observation]) -> Vec<Point>;
}

/// Moves at speed `v` straight toward the next uncaptured waypoint.
#[derive(Debug, Clone, Copy, Default)]
pub struct Expert;

impl Expert {
    pub fn action(task: &TaskSpec, state: Point, next_waypoint: usize) -> Point {
        let Some(&target) = task.waypoints.get(next_waypoint) else {
            return [0.0, 0.0];
        };
        let d = dist(state, target);
        if d == 0.0 {
            return [0.0, 0.0];
        }
        let k = task.speed / d;
        [(target[0] - state[0]) * k, (target[1] - state[1]) * k]
    }
}

impl Policy for Expert {
    fn act(&self, task: &TaskSpec, obs: &[Observation]) -> Vec<Point> {
        obs.iter().map(|o| Expert::action(task, o.state, o.next_waypoint)).collect()
    }
}

/// Never moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stationary;

impl Policy for Stationary {
    fn act(&self, _task: &TaskSpec, obs: &[Observation]) -> Vec<Point> {
        vec![[0.0, 0.0]; obs.len()]
    }
}

/// Progress through the waypoint list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub next_waypoint: usize,
}

impl Progress {
    /// The start waypoint counts as captured.
    pub fn start() -> Self {
        Self { next_waypoint: 1 }
    }

    pub fn done(&self, task: &TaskSpec) -> bool {
        self.next_waypoint >= task.waypoints.len()
    }

    /// Captures waypoints in order while `state` is within the capture radius.
    pub fn update(&mut self, task: &TaskSpec, state: Point) {
        while let Some(&w) = task.waypoints.get(self.next_waypoint) {
            if dist(state, w) <= task.capture_radius {
                self.next_waypoint += 1;
            } else {
                break;
            }
        }
    }
}

/// Initial state: the start waypoint plus transition noise.
pub fn initial_state<R: Rng + ?Sized>(task: &TaskSpec, rng: &mut R) -> Point {
    let w = task.waypoints[0];
    if task.noise == 0.0 {
        return w;
    }
    let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
    [w[0] + task.noise * a, w[1] + task.noise * b]
}

/// Runs `episodes` episodes of `policy` in lockstep so the policy is queried
/// in batches. Each episode draws from its own RNG substream seeded from `rng`.
pub fn rollout_batch<R: RngCore + ?Sized>(
    policy: &dyn Policy,
    task: &TaskSpec,
    episodes: usize,
    rng: &mut R,
) -> Vec<Trajectory> {
    let mut streams: Vec<StreamRng> = (0..episodes).map(|_| SeedTree::new(rng.next_u64()).rng()).collect();
    let horizon = task.horizon;
    let mut states: Vec<Point> = streams.iter_mut().map(|r| initial_state(task, r)).collect();
    let mut progress = vec![Progress::start(); episodes];
    for (p, s) in progress.iter_mut().zip(&states) {
        p.update(task, *s);
    }
    let mut trajs: Vec<Trajectory> = (0..episodes)
        .map(|_| Trajectory {
            task: task.id,
            states: Vec::with_capacity(horizon),
            actions: Vec::with_capacity(horizon),
            success: false,
        })
        .collect();
    for t in 0..horizon {
        let active: Vec<usize> = (0..episodes).filter(|&e| !progress[e].done(task)).collect();
        let obs: Vec<Observation> = active
            .iter()
            .map(|&e| Observation { state: states[e], task: task.id, next_waypoint: progress[e].next_waypoint })
            .collect();
        let acts = if obs.is_empty() { Vec::new() } else { policy.act(task, &obs) };
        let mut act_iter = active.iter().zip(acts);
        let mut next_active = act_iter.next();
        for e in 0..episodes {
            trajs[e].states.push(states[e]);
            let action = match next_active {
                Some((&idx, a)) if idx == e => {
                    next_active = act_iter.next();
                    a
                }
                _ => {
                    trajs[e].actions.push([0.0, 0.0]);
                    continue;
                }
            };
            trajs[e].actions.push(action);
            if t + 1 < horizon {
                states[e] = transition(states[e], action, task.noise, task.max_action(), &mut streams[e]);
                progress[e].update(task, states[e]);
            }
        }
    }
    for (traj, p) in trajs.iter_mut().zip(&progress) {
        traj.success = p.done(task);
    }
    trajs
}

pub fn expert_rollout<R: RngCore + ?Sized>(task: &TaskSpec, rng: &mut R) -> Trajectory {
    rollout_batch(&Expert, task, 1, rng).pop().expect("one episode")
}

/// Highest tolerated expert failure rate when collecting demonstrations.
pub const MAX_EXPERT_FAILURE: f64 = 0.05;

/// The demonstrating expert only switches to the next waypoint once it is
/// within this fraction of the capture radius. Demonstrations therefore pass
/// through waypoints rather than clipping the capture disc, which leaves a
/// cloned policy some margin for error.
pub const DEMO_SWITCH_FRACTION: f64 = 0.5;

/// Expert demonstrations for `task`; errors if more than 5% fail.
pub fn collect_demos<R: RngCore + ?Sized>(task: &TaskSpec, count: usize, rng: &mut R) -> Result<Vec<Trajectory>> {
    let demo_task = TaskSpec { capture_radius: task.capture_radius * DEMO_SWITCH_FRACTION, ..task.clone() };
    let demos = rollout_batch(&Expert, &demo_task, count, rng);
    let failures = demos.iter().filter(|d| !d.success).count();
    if count > 0 && failures as f64 / count as f64 > MAX_EXPERT_FAILURE {
        return Err(Error::Benchmark(format!(
            "expert failed {failures}/{count} rollouts on task {}",
            task.id
        )));
    }
    Ok(demos)
}

/// Fraction of `episodes` in which every waypoint is captured in order
/// within the horizon.
pub fn evaluate_policy<R: RngCore + ?Sized>(policy: &dyn Policy, task: &TaskSpec, episodes: usize, rng: &mut R) -> f64 {
    if episodes == 0 {
        return 0.0;
    }
    let trajs = rollout_batch(policy, task, episodes, rng);
    trajs.iter().filter(|t| t.success).count() as f64 / episodes as f64
}

/// Noiseless expert path, used to bin states by progress along the task.
pub fn reference_path(task: &TaskSpec) -> Vec<Point> {
    let noiseless = TaskSpec { noise: 0.0, ..task.clone() };
    let mut rng = SeedTree::new(0).rng();
    expert_rollout(&noiseless, &mut rng).states
}

/// 1-based timestep of the reference-path point nearest to `state`.
pub fn progress_bin(path: &[Point], state: Point) -> usize {
    path.iter()
        .enumerate()
        .min_by(|a, b| dist(*a.1, state).total_cmp(&dist(*b.1, state)))
        .map(|(i, _)| i + 1)
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathworld::dynamics::{temporally_coherent, DEFAULT_COHERENCE_EPSILON};
    use crate::pathworld::task::{make_task, TaskParams};

    fn task(seed: u64) -> TaskSpec {
        make_task(0, seed, &TaskParams::default()).unwrap()
    }

    #[test]
    fn noiseless_expert_visits_every_waypoint() {
        let t = TaskSpec { noise: 0.0, ..task(1) };
        let traj = expert_rollout(&t, &mut SeedTree::new(0).rng());
        assert!(traj.success);
        assert_eq!(traj.len(), t.horizon);
        assert_eq!(traj.actions.len(), t.horizon);
        for w in &t.waypoints[1..] {
            assert!(traj.states.iter().any(|s| dist(*s, *w) <= t.capture_radius));
        }
        let again = expert_rollout(&t, &mut SeedTree::new(99).rng());
        assert_eq!(traj, again);
    }

    #[test]
    fn padding_holds_position_after_success() {
        let t = task(2);
        let traj = expert_rollout(&t, &mut SeedTree::new(3).rng());
        assert!(traj.success);
        let last_move = traj.actions.iter().rposition(|a| *a != [0.0, 0.0]).unwrap();
        assert!(last_move + 1 < traj.len());
        let hold = traj.states[last_move + 1];
        assert!(traj.states[last_move + 1..].iter().all(|s| *s == hold));
    }

    #[test]
    fn expert_succeeds_on_default_tasks() {
        for seed in 0..20 {
            let t = task(seed);
            let rate = evaluate_policy(&Expert, &t, 100, &mut SeedTree::new(seed).rng());
            assert!(rate >= 0.95, "task seed {seed}: {rate}");
        }
    }

    #[test]
    fn expert_trajectories_are_coherent() {
        let t = task(5);
        for traj in rollout_batch(&Expert, &t, 50, &mut SeedTree::new(1).rng()) {
            assert!(temporally_coherent(&traj.states, DEFAULT_COHERENCE_EPSILON, t.noise, t.max_action()));
        }
    }

    #[test]
    fn stationary_policy_never_succeeds() {
        let t = task(4);
        assert_eq!(evaluate_policy(&Stationary, &t, 100, &mut SeedTree::new(0).rng()), 0.0);
    }

    #[test]
    fn noiseless_expert_scores_one() {
        let t = TaskSpec { noise: 0.0, ..task(6) };
        assert_eq!(evaluate_policy(&Expert, &t, 100, &mut SeedTree::new(0).rng()), 1.0);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let t = task(7);
        // a mediocre policy makes the outcome depend on the noise
        struct Slow;
        impl Policy for Slow {
            fn act(&self, task: &TaskSpec, obs: &[Observation]) -> Vec<Point> {
                obs.iter()
                    .map(|o| {
                        let a = Expert::action(task, o.state, o.next_waypoint);
                        [a[0] * 0.62, a[1] * 0.62]
                    })
                    .collect()
            }
        }
        let a = evaluate_policy(&Slow, &t, 100, &mut SeedTree::new(5).rng());
        let b = evaluate_policy(&Slow, &t, 100, &mut SeedTree::new(5).rng());
        assert_eq!(a, b);
    }

    #[test]
    fn demo_collection_rejects_hopeless_expert() {
        let mut t = task(8);
        t.noise = 0.2;
        assert!(matches!(collect_demos(&t, 100, &mut SeedTree::new(0).rng()), Err(Error::Benchmark(_))));
    }

    #[test]
    fn progress_bins_follow_the_path() {
        let t = task(9);
        let path = reference_path(&t);
        assert_eq!(progress_bin(&path, path[0]), 1);
        assert_eq!(progress_bin(&path, path[10]), 11);
    }
}
