use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedTree;

pub type Point = [f64; 2];

pub fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Generator parameters for [`make_task`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParams {
    pub waypoints: usize,
    pub bounds: (f64, f64),
    pub speed: f64,
    pub noise: f64,
    pub capture_radius: f64,
    pub horizon: usize,
}

impl Default for TaskParams {
    fn default() -> Self {
        Self { waypoints: 4, bounds: (0.0, 1.0), speed: 0.03, noise: 0.005, capture_radius: 0.05, horizon: 100 }
    }
}

/// Slack between the path length and what the expert can travel in `horizon` steps.
pub const FEASIBILITY_SLACK: f64 = 0.9;
const MAX_ATTEMPTS: usize = 100;
/// Candidate draws per waypoint within one attempt.
const CANDIDATES: usize = 50;

/// One path-following task: start at `waypoints[0]`, visit the rest in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: usize,
    pub waypoints: Vec<Point>,
    pub speed: f64,
    pub noise: f64,
    pub capture_radius: f64,
    pub horizon: usize,
}

impl TaskSpec {
    pub fn new(
        id: usize,
        waypoints: Vec<Point>,
        speed: f64,
        noise: f64,
        capture_radius: f64,
        horizon: usize,
    ) -> Result<Self> {
        let task = Self { id, waypoints, speed, noise, capture_radius, horizon };
        task.validate()?;
        Ok(task)
    }

    /// Largest commanded displacement the dynamics accept.
    pub fn max_action(&self) -> f64 {
        2.0 * self.speed
    }

    pub fn path_length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| dist(w[0], w[1])).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.waypoints.len();
        if k < 2 {
            return Err(Error::config("a task needs at least two waypoints"));
        }
        if !(self.speed > 0.0 && self.noise >= 0.0 && self.capture_radius > 0.0) {
            return Err(Error::config("speed and capture radius must be positive, noise non-negative"));
        }
        if self.horizon < k {
            return Err(Error::config(format!("horizon {} shorter than waypoint count {k}", self.horizon)));
        }
        if self.waypoints.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("consecutive waypoints must be distinct"));
        }
        let budget = FEASIBILITY_SLACK * self.speed * self.horizon as f64;
        if self.path_length() > budget {
            return Err(Error::Benchmark(format!(
                "path length {:.3} exceeds feasible budget {budget:.3}",
                self.path_length()
            )));
        }
        Ok(())
    }

    /// Stricter conditions required of generated tasks, so that position alone
    /// identifies the expert's heading: segments at least two capture radii
    /// long, turns no sharper than [`MIN_TURN_ANGLE`], and non-adjacent
    /// segments neither crossing nor closer than [`SEGMENT_CLEARANCE`] radii.
    fn well_separated(&self) -> bool {
        well_separated(&self.waypoints, self.capture_radius)
    }
}

fn well_separated(waypoints: &[Point], capture_radius: f64) -> bool {
    let segs: Vec<(Point, Point)> = waypoints.windows(2).map(|w| (w[0], w[1])).collect();
    if segs.iter().any(|(a, b)| dist(*a, *b) < 2.0 * capture_radius) {
        return false;
    }
    for w in waypoints.windows(3) {
        if interior_angle(w[0], w[1], w[2]) < MIN_TURN_ANGLE {
            return false;
        }
    }
    let clearance = SEGMENT_CLEARANCE * capture_radius;
    for i in 0..segs.len() {
        for j in i + 2..segs.len() {
            if segments_intersect(segs[i], segs[j]) || segment_distance(segs[i], segs[j]) < clearance {
                return false;
            }
        }
    }
    true
}

/// Smallest allowed angle at an interior waypoint between the incoming and outgoing legs.
pub const MIN_TURN_ANGLE: f64 = std::f64::consts::FRAC_PI_2;
/// Minimum gap between non-adjacent segments, in capture radii.
pub const SEGMENT_CLEARANCE: f64 = 4.0;

fn interior_angle(a: Point, b: Point, c: Point) -> f64 {
    let (u, v) = ([a[0] - b[0], a[1] - b[1]], [c[0] - b[0], c[1] - b[1]]);
    let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
    cos.clamp(-1.0, 1.0).acos()
}

/// Euclidean distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: Point, (a, b): (Point, Point)) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0) };
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Distance between two non-crossing segments.
fn segment_distance(p: (Point, Point), q: (Point, Point)) -> f64 {
    [
        point_segment_distance(p.0, q),
        point_segment_distance(p.1, q),
        point_segment_distance(q.0, p),
        point_segment_distance(q.1, p),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_intersect((p1, p2): (Point, Point), (q1, q2): (Point, Point)) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

/// Procedurally generates a feasible task; deterministic in `seed`.
pub fn make_task(id: usize, seed: u64, params: &TaskParams) -> Result<TaskSpec> {
    let (lo, hi) = params.bounds;
    let ordered = hi > lo;
    if !ordered || params.waypoints < 2 {
        return Err(Error::config("invalid task bounds or waypoint count"));
    }
    let mut rng = SeedTree::new(seed).child("task").index(id as u64).rng();
    let budget = FEASIBILITY_SLACK * params.speed * params.horizon as f64;
    let draw = |rng: &mut crate::rng::StreamRng| [rng.random_range(lo..hi), rng.random_range(lo..hi)];
    'attempt: for _ in 0..MAX_ATTEMPTS {
        // Grow the path one waypoint at a time, redrawing any waypoint that
        // would break separation or the length budget.
        let mut waypoints = vec![draw(&mut rng)];
        while waypoints.len() < params.waypoints {
            let mut placed = false;
            for _ in 0..CANDIDATES {
                waypoints.push(draw(&mut rng));
                let length: f64 = waypoints.windows(2).map(|w| dist(w[0], w[1])).sum();
                if length <= budget && well_separated(&waypoints, params.capture_radius) {
                    placed = true;
                    break;
                }
                waypoints.pop();
            }
            if !placed {
                continue 'attempt;
            }
        }
        let task = TaskSpec {
            id,
            waypoints,
            speed: params.speed,
            noise: params.noise,
            capture_radius: params.capture_radius,
            horizon: params.horizon,
        };
        if task.validate().is_ok() && task.well_separated() {
            return Ok(task);
        }
    }
    Err(Error::Benchmark(format!(
        "no feasible task found for id {id} after {MAX_ATTEMPTS} attempts"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_task() {
        let p = TaskParams::default();
        assert_eq!(make_task(3, 17, &p).unwrap(), make_task(3, 17, &p).unwrap());
        assert_ne!(make_task(3, 17, &p).unwrap().waypoints, make_task(4, 17, &p).unwrap().waypoints);
    }

    #[test]
    fn opposite_corners_with_slack_are_feasible() {
        let diag = 2f64.sqrt();
        let speed = 0.03;
        let horizon = (2.0 * diag / speed).ceil() as usize;
        assert!(speed * horizon as f64 >= 2.0 * diag);
        TaskSpec::new(0, vec![[0.0, 0.0], [1.0, 1.0]], speed, 0.005, 0.05, horizon).unwrap();
    }

    #[test]
    fn infeasible_and_malformed_rejected() {
        assert!(TaskSpec::new(0, vec![[0.0, 0.0], [1.0, 1.0]], 0.03, 0.005, 0.05, 20).is_err());
        assert!(TaskSpec::new(0, vec![[0.5, 0.5], [0.5, 0.5]], 0.03, 0.005, 0.05, 100).is_err());
        assert!(TaskSpec::new(0, vec![[0.5, 0.5]], 0.03, 0.005, 0.05, 100).is_err());
        assert!(TaskSpec::new(0, vec![[0.0, 0.0], [0.1, 0.0]], 0.0, 0.005, 0.05, 100).is_err());
    }

    #[test]
    fn random_sweep_never_violates_feasibility() {
        let p = TaskParams::default();
        for seed in 0..1000 {
            let t = make_task(0, seed, &p).unwrap();
            assert!(t.validate().is_ok());
            assert!(t.path_length() <= FEASIBILITY_SLACK * t.speed * t.horizon as f64);
            assert!(t.waypoints.iter().flatten().all(|c| (0.0..1.0).contains(c)));
            assert!(t.well_separated());
            for w in t.waypoints.windows(3) {
                assert!(interior_angle(w[0], w[1], w[2]) >= MIN_TURN_ANGLE);
            }
        }
    }

    #[test]
    fn separation_rejects_hairpins_and_near_parallel_legs() {
        let r = 0.05;
        assert!(well_separated(&[[0.1, 0.1], [0.9, 0.1], [0.9, 0.9]], r));
        // 45 degree turn.
        assert!(!well_separated(&[[0.1, 0.1], [0.9, 0.1], [0.1, 0.9]], r));
        // Third leg runs 0.1 from the first.
        assert!(!well_separated(&[[0.1, 0.1], [0.9, 0.1], [0.9, 0.2], [0.2, 0.2]], r));
        assert!(!well_separated(&[[0.1, 0.1], [0.12, 0.1]], r));
        assert!((segment_distance(([0.0, 0.0], [1.0, 0.0]), ([0.5, 0.3], [0.5, 0.8])) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn impossible_parameters_error_after_retries() {
        let p = TaskParams { horizon: 4, ..TaskParams::default() };
        assert!(matches!(make_task(0, 1, &p), Err(Error::Benchmark(_))));
    }

    #[test]
    fn crossing_detector() {
        assert!(segments_intersect(([0.0, 0.0], [1.0, 1.0]), ([0.0, 1.0], [1.0, 0.0])));
        assert!(!segments_intersect(([0.0, 0.0], [1.0, 0.0]), ([0.0, 1.0], [1.0, 1.0])));
    }
}
