//! Denoising diffusion model over fixed-size sample vectors, conditioned on a
//! trajectory timestep.

pub mod denoiser;
pub mod sample;
pub mod schedule;

pub use denoiser::{
    denoise_loss, denoise_loss_batch, denoise_loss_fixed, draw_noise, noise_error, q_sample, train_denoiser,
    Denoiser, ErrorNorm, NoisePredictor,
};
pub use sample::{generate, generate_batch};
pub use schedule::{DiffusionSchedule, ScheduleDescriptor};
