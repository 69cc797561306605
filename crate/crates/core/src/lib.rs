//! Shared-autonomy teleoperation with a diffusion-based assistive agent.
//!
//! An operator's action is partially noised and then denoised by a
//! state-conditioned diffusion model; the noising depth sets how much control
//! the agent takes. Data gathered this way retrains the agent, round after
//! round, until it can act on its own.
//!
//! Module map:
//!
//! - [`nn`]: small dense networks, gradients, AdamW, EMA, checkpoints
//! - [`diffusion`]: noise schedule, forward process, loss, reverse sampling
//! - [`shared_control`]: diffusion and linear blending, control-ratio rules
//! - [`envs`]: 2-D manipulation tasks, scripted experts, simulated operators
//! - [`agents`]: the assistive agent and a behavior-cloning baseline
//! - [`jointloop`]: collection rounds, metrics, sweeps and the trajectory store

pub mod agents;
pub mod diffusion;
pub mod envs;
pub mod error;
pub mod jointloop;
pub mod nn;
pub mod rng;
pub mod shared_control;

pub use error::{Error, Result};
