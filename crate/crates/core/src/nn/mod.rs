//! Dense networks, reverse-mode gradients, AdamW and weight averaging.

mod checkpoint;
mod ema;
mod matrix;
mod mlp;
mod optim;

pub use checkpoint::{
    load_json, save_json, EmaSnapshot, NetworkCheckpoint, OptimizerSnapshot, NETWORK_FORMAT_VERSION,
};
pub use ema::{EmaState, DEFAULT_EMA_DECAY};
pub use matrix::Matrix;
pub use mlp::{Activation, Dense, Gradients, MlpParams, MlpSpec, Tape};
pub use optim::{adamw_step, AdamWConfig, OptimizerState};
