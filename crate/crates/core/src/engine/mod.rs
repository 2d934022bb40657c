//! Continual imitation learners and the run orchestrator.

mod config;
mod ewc;
mod generator;
mod learner;
mod packnet;
mod policy;
mod replay;
mod run;


pub use config::{MethodConfig, MethodKind};
pub use ewc::{estimate_fisher, ewc_train, EwcPenalty, FisherInfo};
pub use generator::{Conditioning, GeneratorConfig, StateGenerator, StateSample};
pub use learner::{
    build_learner, BcLearner, BucketContext, BucketLog, CrilLearner, EwcLearner, Learner, PackNetLearner,
    ReplayLearner,
};
pub use packnet::{packnet_step, PackNetSchedule, ParamMasks};
pub use policy::{bc_data, encode_inputs, steps_of, ActionLabeler, ExpertLabeler, LabeledStep, PolicyNet};
pub use replay::{
    cril_generate, dgr_generate, replay_count, tdgr_generate, CorruptedDynamics, CrilRollout, Dynamics, DynamicsNet,
    OracleDynamics, StartSampler, SyntheticTrajectory,
};
pub use run::{run_method, trained_columns, RunInputs, RunOutput, RunResult, RESULT_SCHEMA_VERSION};
