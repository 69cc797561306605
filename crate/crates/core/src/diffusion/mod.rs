//! Conditional denoising diffusion over actions.
//!
//! The forward process blurs an action `a` into `a_k = √ᾱ_k·a + √(1−ᾱ_k)·ε`;
//! a network learns to recover `ε` from `(a_k, s, k)`, and the reverse chain
//! uses it to walk a noisy action back to a clean one for state `s`.

mod predictor;
mod process;
mod schedule;

pub use predictor::{step_embedding, EpsilonModel, NoisePredictor, STEP_EMBED_DIM};
pub use process::{
    batch_loss, ddpm_loss, denoise_batch, denoise_from, diffuse_with, forward_diffuse,
    make_noisy_batch, noise_mse, sample_full, LossOutput, NoisyBatch, TrainConfig,
};
pub use schedule::{build_schedule, BlendNoise, DiffusionSchedule, ScheduleConfig};
