//! 2-D waypoint-following benchmark: task generation, noisy dynamics, a
//! scripted expert, evaluation, temporal coherence and task streams.

pub mod dataset;
pub mod dynamics;
pub mod rollout;
pub mod stream;
pub mod task;

pub use dynamics::{clamp_action, coherence_radius, temporally_coherent, transition, DEFAULT_COHERENCE_EPSILON};
pub use rollout::{
    collect_demos, evaluate_policy, expert_rollout, initial_state, progress_bin, reference_path, rollout_batch,
    Expert, Observation, Policy, Progress, Stationary, Trajectory,
};
pub use stream::{build_stream, split_sizes, StreamBucket, StreamMode};
pub use task::{dist, make_task, point_segment_distance, Point, TaskParams, TaskSpec};
