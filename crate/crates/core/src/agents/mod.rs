//! Policies built on the networks: the diffusion assistive agent and a
//! behavior-cloning baseline.
//!
//! Both work in a normalized space fitted to their training data and emit
//! actions clipped to the task bounds.

mod assistive;
mod bc;
mod normalizer;

pub use assistive::{
    train_diffusion, AgentCheckpoint, AgentConfig, AssistStep, AssistiveAgent, AGENT_FORMAT_VERSION,
};
pub use bc::{train_bc, BcAgent, BcCheckpoint, BcConfig};
pub use normalizer::{fit_normalizer, AffineMap, Normalizer, Samples, DEGENERATE_SPAN};
