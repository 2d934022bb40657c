//! Minimal differentiable toolkit: MLPs, sinusoidal embeddings, Adam and the
//! behavioral-cloning training step.

pub mod adam;
pub mod bc;
pub mod checkpoint;
pub mod embed;
pub mod mlp;

pub use adam::{AdamConfig, AdamState, UpdateMask};
pub use bc::{bc_train_epoch, mse_loss, mse_loss_grad, BcData, EpochReport, Regularizer, TrainOptions};
pub use checkpoint::Checkpoint;
pub use embed::{time_embed, time_embed_into};
pub use mlp::{Activation, Gradients, Layer, Mlp, Tensors, Trace};
