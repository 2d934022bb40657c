//! Continual imitation learning with trajectory-conditioned generative replay.
//!
//! The crate is organised bottom-up: [`nn`] and [`diffusion`] provide the
//! numerical core, [`pathworld`] the benchmark, [`engine`] the continual
//! learners, and [`metrics`] / [`analysis`] the evaluation. [`harness`] ties
//! them together into reproducible experiments.

pub mod analysis;
pub mod diffusion;
pub mod engine;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod pathworld;
pub mod rng;

pub use error::{Error, Result};
