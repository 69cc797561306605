//! The joint learning loop: collect demonstrations under shared control,
//! keep the valid ones, finetune the agent on everything gathered so far,
//! and repeat with more autonomy.

mod metrics;
mod rollout;
mod store;
mod trajectory;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use metrics::{
    compute_metrics, reports_table, sweep_csv, Attempt, Metrics, RoundReport, SweepPoint, CONTROL_HZ,
};
pub use rollout::{run_episodes, Driver};
pub use store::{
    dataset_files, load_dataset, read_trajectory, replay, save_dataset, write_trajectory, Manifest,
    ManifestEntry, ReplayReport, StepRecord, TrajectoryHeader, MANIFEST_FILE, REPLAY_TOLERANCE,
    STORE_FORMAT_VERSION,
};
pub use trajectory::{training_samples, CollectionMode, DatasetSizes, Trajectory, Transition};

use crate::agents::{fit_normalizer, train_diffusion, AgentConfig, AssistiveAgent};
use crate::envs::{OperatorProfile, Task};
use crate::error::{Error, Result};
use crate::rng::mix_seed;
use crate::shared_control::ControlRatio;

/// Attempts allowed per requested valid trajectory.
pub const ATTEMPT_FACTOR: usize = 4;
/// Starting ratio of an adaptive round.
pub const ADAPTIVE_START: f64 = 0.5;

// Sub-seed tags derived from the master seed.
const SEED_AGENT: u64 = 0x100;
const SEED_COLLECT: u64 = 0x200;
const SEED_TRAIN: u64 = 0x300;
const SEED_SWEEP: u64 = 0x400;
const SEED_HELD_OUT: u64 = 0x500;

/// Control ratio policy of a collection round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaPolicy {
    Fixed(f64),
    Adaptive(AdaptiveTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdaptiveTag {
    #[serde(rename = "adaptive")]
    Adaptive,
}

impl GammaPolicy {
    pub const ADAPTIVE: GammaPolicy = GammaPolicy::Adaptive(AdaptiveTag::Adaptive);

    pub fn ratio(&self) -> Result<ControlRatio> {
        match *self {
            GammaPolicy::Fixed(g) => ControlRatio::manual(g),
            GammaPolicy::Adaptive(_) => ControlRatio::adaptive(ADAPTIVE_START),
        }
    }
}

impl fmt::Display for GammaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaPolicy::Fixed(g) => write!(f, "{g}"),
            GammaPolicy::Adaptive(_) => f.write_str("adaptive"),
        }
    }
}

impl FromStr for GammaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "adaptive" {
            return Ok(Self::ADAPTIVE);
        }
        let g: f64 = s
            .parse()
            .map_err(|_| Error::Config(format!("control ratio {s:?} is neither a number nor \"adaptive\"")))?;
        ControlRatio::manual(g)?;
        Ok(GammaPolicy::Fixed(g))
    }
}

/// One entry of the rounds schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundSpec {
    pub n_target: usize,
    pub gamma: GammaPolicy,
    /// Training epochs after this round; `None` uses the agent's default.
    #[serde(default)]
    pub epochs: Option<usize>,
}

impl RoundSpec {
    pub fn new(n_target: usize, gamma: f64) -> Self {
        Self {
            n_target,
            gamma: GammaPolicy::Fixed(gamma),
            epochs: None,
        }
    }
}

/// Parses `"10:0,10:0.5,10:adaptive"` into a rounds schedule.
pub fn parse_rounds(text: &str) -> Result<Vec<RoundSpec>> {
    let rounds = text
        .split(',')
        .map(|part| {
            let (n, g) = part
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("round {part:?} is not of the form n:gamma")))?;
            let n_target: usize = n
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("round size {n:?} is not a count")))?;
            if n_target == 0 {
                return Err(Error::Config("round size must be at least 1".into()));
            }
            Ok(RoundSpec {
                n_target,
                gamma: g.trim().parse()?,
                epochs: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if rounds.is_empty() {
        return Err(Error::Config("empty rounds schedule".into()));
    }
    Ok(rounds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointConfig {
    pub task: Task,
    pub operator: OperatorProfile,
    pub rounds: Vec<RoundSpec>,
    pub agent: AgentConfig,
    pub seed: u64,
    /// Held-out episodes for the final autonomous evaluation; 0 skips it.
    pub eval_episodes: usize,
    /// Ratios swept after every round; empty skips the sweep.
    pub sweep_gammas: Vec<f64>,
    pub sweep_episodes: usize,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            task: Task::PushCube,
            operator: OperatorProfile::calibrated(),
            rounds: vec![RoundSpec::new(10, 0.0), RoundSpec::new(10, 0.5), RoundSpec::new(10, 0.5)],
            agent: AgentConfig::default(),
            seed: 0,
            eval_episodes: 100,
            sweep_gammas: Vec::new(),
            sweep_episodes: 50,
        }
    }
}

/// Valid trajectories of one round and the record of every attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    pub trajectories: Vec<Trajectory>,
    pub attempts: Vec<Attempt>,
}

/// Episode seeds `0..count` of a stream.
pub fn episode_seeds(base: u64, range: std::ops::Range<usize>) -> Vec<u64> {
    range.map(|i| mix_seed(base, i as u64)).collect()
}

/// Runs episodes until `n_target` are valid or `4·n_target` attempts are used.
/// Failed attempts are recorded but not returned.
pub fn collect_round(
    task: Task,
    profile: &OperatorProfile,
    driver: &Driver<'_>,
    n_target: usize,
    seed: u64,
) -> Result<Collection> {
    if n_target == 0 {
        return Err(Error::Config("n_target must be at least 1".into()));
    }
    let budget = ATTEMPT_FACTOR * n_target;
    let mut out = Collection {
        trajectories: Vec::new(),
        attempts: Vec::new(),
    };
    let mut next = 0;
    while out.trajectories.len() < n_target && next < budget {
        // never overshoots: at most the number still missing
        let batch = (n_target - out.trajectories.len()).min(budget - next);
        let seeds = episode_seeds(seed, next..next + batch);
        for traj in run_episodes(task, profile, driver, &seeds)? {
            out.attempts.push(Attempt::from(&traj));
            if traj.is_valid() {
                out.trajectories.push(traj);
            }
        }
        next += batch;
    }
    if out.trajectories.is_empty() {
        return Err(Error::CollectionFailed(format!(
            "{task}: no valid trajectory in {budget} attempts"
        )));
    }
    Ok(out)
}

/// Success rate and mean successful horizon over a fixed seed set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_horizon: Option<f64>,
}

impl Evaluation {
    pub fn of(trajs: &[Trajectory]) -> Self {
        let wins: Vec<&Trajectory> = trajs.iter().filter(|t| t.success).collect();
        let n = wins.len();
        Self {
            episodes: trajs.len(),
            success_rate: if trajs.is_empty() { 0.0 } else { n as f64 / trajs.len() as f64 },
            mean_horizon: (n > 0).then(|| wins.iter().map(|t| t.horizon() as f64).sum::<f64>() / n as f64),
        }
    }
}

pub fn evaluate(task: Task, profile: &OperatorProfile, driver: &Driver<'_>, seeds: &[u64]) -> Result<Evaluation> {
    Ok(Evaluation::of(&run_episodes(task, profile, driver, seeds)?))
}

/// Shared-control success curve over `gammas`, every point on the same seeds.
pub fn gamma_sweep(
    agent: &AssistiveAgent,
    profile: &OperatorProfile,
    gammas: &[f64],
    episodes: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    let seeds = episode_seeds(seed, 0..episodes);
    gammas
        .iter()
        .map(|&g| {
            let driver = Driver::Assisted {
                agent,
                ratio: ControlRatio::manual(g)?,
            };
            let e = evaluate(agent.task(), profile, &driver, &seeds)?;
            Ok(SweepPoint {
                gamma: g,
                episodes,
                success_rate: e.success_rate,
                mean_horizon: e.mean_horizon,
            })
        })
        .collect()
}

/// Seeds of the held-out autonomous evaluation for a master seed.
pub fn held_out_seeds(master: u64, episodes: usize) -> Vec<u64> {
    episode_seeds(mix_seed(master, SEED_HELD_OUT), 0..episodes)
}

#[derive(Debug, Clone)]
pub struct JointOutcome {
    pub agent: AssistiveAgent,
    pub reports: Vec<RoundReport>,
    pub dataset: Vec<Trajectory>,
    pub autonomy: Option<Evaluation>,
}

/// Callback receiving each round's report as soon as it is available.
pub type RoundHook<'a> = dyn FnMut(&RoundReport, &AssistiveAgent, &[Trajectory]) -> Result<()> + 'a;

pub fn run_joint_learning(cfg: &JointConfig) -> Result<JointOutcome> {
    run_joint_learning_with(cfg, &mut |_, _, _| Ok(()))
}

/// [`run_joint_learning`] with a per-round callback.
///
/// Round 0 is always collected under full manual control. After each round
/// with a positive epoch count the normalizer is refit to the whole dataset
/// and the agent is finetuned from its current weights.
pub fn run_joint_learning_with(cfg: &JointConfig, hook: &mut RoundHook<'_>) -> Result<JointOutcome> {
    if cfg.rounds.is_empty() {
        return Err(Error::Config("rounds schedule is empty".into()));
    }
    cfg.operator.validate()?;
    let task = cfg.task;
    let mut agent = AssistiveAgent::new(task, &cfg.agent, mix_seed(cfg.seed, SEED_AGENT))?;
    let mut dataset: Vec<Trajectory> = Vec::new();
    let mut reports = Vec::with_capacity(cfg.rounds.len());

    for (r, spec) in cfg.rounds.iter().enumerate() {
        let gamma = if r == 0 { GammaPolicy::Fixed(0.0) } else { spec.gamma };
        let driver = if r == 0 {
            Driver::Manual
        } else {
            Driver::Assisted {
                agent: &agent,
                ratio: gamma.ratio()?,
            }
        };
        let seed = mix_seed(mix_seed(cfg.seed, SEED_COLLECT), r as u64);
        let collection = collect_round(task, &cfg.operator, &driver, spec.n_target, seed)?;
        let metrics = compute_metrics(&collection.attempts)?;
        let alignments: Vec<f64> = collection.trajectories.iter().filter_map(|t| t.mean_alignment()).collect();
        let mean_alignment =
            (!alignments.is_empty()).then(|| alignments.iter().sum::<f64>() / alignments.len() as f64);
        dataset.extend(collection.trajectories);

        let epochs = spec.epochs.unwrap_or(cfg.agent.train.epochs);
        let mut final_loss = None;
        if epochs > 0 {
            let samples = training_samples(&dataset)?;
            agent.normalizer = fit_normalizer(&samples)?;
            let train = crate::diffusion::TrainConfig {
                epochs,
                seed: mix_seed(mix_seed(cfg.seed, SEED_TRAIN), r as u64),
                ..cfg.agent.train.clone()
            };
            final_loss = train_diffusion(&mut agent, &samples, &train)?.last().copied();
        }

        let sweep = if cfg.sweep_gammas.is_empty() {
            Vec::new()
        } else {
            let seed = mix_seed(mix_seed(cfg.seed, SEED_SWEEP), r as u64);
            gamma_sweep(&agent, &cfg.operator, &cfg.sweep_gammas, cfg.sweep_episodes, seed)?
        };
        let report = RoundReport {
            round: r,
            gamma,
            n_target: spec.n_target,
            dataset: DatasetSizes::of(&dataset),
            metrics,
            mean_alignment,
            epochs,
            final_loss,
            sweep,
        };
        hook(&report, &agent, &dataset)?;
        reports.push(report);
    }

    let autonomy = if cfg.eval_episodes > 0 {
        let seeds = held_out_seeds(cfg.seed, cfg.eval_episodes);
        Some(evaluate(task, &cfg.operator, &Driver::Autonomous(&agent), &seeds)?)
    } else {
        None
    };
    Ok(JointOutcome {
        agent,
        reports,
        dataset,
        autonomy,
    })
}
