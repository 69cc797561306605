use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use teleassist::envs::{OperatorProfile, Task};
use teleassist::jointloop::GammaPolicy;

use crate::CliError;

pub const DEFAULT_OUT: &str = "teleassist-out";
pub const DEFAULT_ROUNDS: &str = "10:0,10:0.5,10:0.5";
pub const DEFAULT_GAMMAS: &str = "0,0.25,0.5,0.75,1";
pub const DEFAULT_PORT: u16 = 8765;

/// Shared-autonomy teleoperation with a diffusion assistive agent.
///
/// Every flag may also be given in the `--config` JSON file under its long
/// name (`{"task": "push_cube", "eval-episodes": 20}`); flags on the command
/// line take precedence.
#[derive(Debug, Parser)]
#[command(name = "teleassist", version)]
pub struct Cli {
    /// Master seed [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: teleassist-out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON file supplying defaults for any flag
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the joint learning loop and write agent, dataset and round reports
    Train(TrainArgs),
    /// Collect demonstrations with the simulated operator
    Collect(CollectArgs),
    /// Sweep the control ratio and measure autonomous success of a checkpoint
    Evaluate(EvaluateArgs),
    /// Serve live shared-control sessions over a websocket
    Serve(ServeArgs),
    /// Re-simulate stored trajectories and check them step by step
    Replay(ReplayArgs),
}

/// Simulated operator; unset fields keep the calibrated profile.
#[derive(Debug, Clone, Default, Args)]
pub struct OperatorArgs {
    /// Per-step noise as a fraction of the action bound [default: 0.05]
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Reaction delay in steps [default: 1]
    #[arg(long)]
    pub lag_steps: Option<usize>,
    /// Probability of a dropped command [default: 0.05]
    #[arg(long)]
    pub dropout_prob: Option<f64>,
    /// Std of the per-episode goal misperception [default: 0.1]
    #[arg(long)]
    pub waypoint_jitter: Option<f64>,
    /// Seed of the operator's corruption stream [default: 0]
    #[arg(long)]
    pub operator_seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// pick_place, push_cube or latch
    #[arg(long)]
    pub task: Option<String>,
    /// Rounds as n:gamma pairs [default: 10:0,10:0.5,10:0.5]
    #[arg(long)]
    pub rounds: Option<String>,
    /// Training epochs after each round [default: 2000]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Held-out autonomous episodes after the last round; 0 skips [default: 100]
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    /// Ratios swept after every round, e.g. 0,0.5,1 [default: none]
    #[arg(long)]
    pub sweep_gammas: Option<String>,
    /// Episodes per sweep point [default: 50]
    #[arg(long)]
    pub sweep_episodes: Option<usize>,
    #[command(flatten)]
    pub operator: OperatorArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CollectArgs {
    #[arg(long)]
    pub task: Option<String>,
    /// Agent checkpoint for shared control [default: none, manual only]
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Control ratio or "adaptive" [default: 0, or 0.5 with a checkpoint]
    #[arg(long)]
    pub gamma: Option<String>,
    /// Valid trajectories to gather [default: 10]
    #[arg(long)]
    pub episodes: Option<usize>,
    #[command(flatten)]
    pub operator: OperatorArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub task: Option<String>,
    /// Agent checkpoint to evaluate
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Ratios to sweep [default: 0,0.25,0.5,0.75,1]
    #[arg(long)]
    pub gammas: Option<String>,
    /// Episodes per ratio and for the autonomous run [default: 50]
    #[arg(long)]
    pub episodes: Option<usize>,
    #[command(flatten)]
    pub operator: OperatorArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub task: Option<String>,
    /// Agent checkpoint; assistance is off without one
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Initial control ratio or "adaptive" [default: 0.5]
    #[arg(long)]
    pub gamma: Option<String>,
    /// [default: 127.0.0.1]
    #[arg(long)]
    pub host: Option<String>,
    /// [default: 8765]
    #[arg(long)]
    pub port: Option<u16>,
    /// Tick period in milliseconds [default: 100]
    #[arg(long)]
    pub tick_ms: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// A single trajectory file
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// A dataset directory with a manifest
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Largest accepted state deviation [default: 1e-9]
    #[arg(long)]
    pub tolerance: Option<f64>,
}

/// Contents of a `--config` file. Keys are the long flag names.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub task: Option<String>,
    pub rounds: Option<String>,
    pub epochs: Option<usize>,
    pub eval_episodes: Option<usize>,
    pub sweep_gammas: Option<String>,
    pub sweep_episodes: Option<usize>,
    pub noise_std: Option<f64>,
    pub lag_steps: Option<usize>,
    pub dropout_prob: Option<f64>,
    pub waypoint_jitter: Option<f64>,
    pub operator_seed: Option<u64>,
    pub checkpoint: Option<PathBuf>,
    pub gamma: Option<String>,
    pub gammas: Option<String>,
    pub episodes: Option<usize>,
    pub host: Option<String>,
    pub port: Option<u16>,
    pub tick_ms: Option<u64>,
    pub trajectory: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub tolerance: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}

pub fn parse_task(text: &str) -> Result<Task, CliError> {
    text.parse().map_err(|e: teleassist::Error| CliError::Usage(e.to_string()))
}

pub fn parse_gamma(text: &str) -> Result<GammaPolicy, CliError> {
    text.parse().map_err(|e: teleassist::Error| CliError::Usage(e.to_string()))
}

pub fn parse_gammas(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| match parse_gamma(s.trim())? {
            GammaPolicy::Fixed(g) => Ok(g),
            GammaPolicy::Adaptive(_) => Err(CliError::Usage("sweeps take numeric ratios only".into())),
        })
        .collect()
}

/// Resolves `task` from the flag or the config file; it is required.
pub fn require_task(flag: &Option<String>, file: &FileConfig) -> Result<Task, CliError> {
    let text = flag
        .as_ref()
        .or(file.task.as_ref())
        .ok_or_else(|| CliError::Usage("--task is required".into()))?;
    parse_task(text)
}

impl OperatorArgs {
    pub fn resolve(&self, file: &FileConfig) -> Result<OperatorProfile, CliError> {
        let base = OperatorProfile::calibrated();
        let p = OperatorProfile {
            noise_std: self.noise_std.or(file.noise_std).unwrap_or(base.noise_std),
            lag_steps: self.lag_steps.or(file.lag_steps).unwrap_or(base.lag_steps),
            dropout_prob: self.dropout_prob.or(file.dropout_prob).unwrap_or(base.dropout_prob),
            waypoint_jitter: self.waypoint_jitter.or(file.waypoint_jitter).unwrap_or(base.waypoint_jitter),
            seed: self.operator_seed.or(file.operator_seed).unwrap_or(base.seed),
        };
        p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(p)
    }
}
