use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::normalizer::{Normalizer, Samples};
use crate::diffusion::{
    ddpm_loss, denoise_batch, DiffusionSchedule, EpsilonModel, NoisePredictor, ScheduleConfig,
    TrainConfig,
};
use crate::envs::Task;
use crate::error::{shape_err, Error, Result};
use crate::nn::{
    adamw_step, load_json, save_json, AdamWConfig, EmaState, Matrix, MlpParams, NetworkCheckpoint,
    OptimizerState,
};
use crate::rng::{normal, rng_for};
use crate::shared_control::{blend_diffusion_batch, preference_alignment, ControlRatio};

pub const AGENT_FORMAT_VERSION: u32 = 1;

/// Architecture and training settings of an [`AssistiveAgent`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub schedule: ScheduleConfig,
    pub train: TrainConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128; 4],
            schedule: ScheduleConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Diffusion policy over normalized actions, conditioned on normalized
/// states. Training updates the live weights; inference uses the EMA shadow.
#[derive(Debug, Clone, PartialEq)]
pub struct AssistiveAgent {
    task: Task,
    pub predictor: NoisePredictor,
    pub schedule: DiffusionSchedule,
    pub normalizer: Normalizer,
    pub ema: EmaState,
    pub train_config: TrainConfig,
}

/// The EMA weights behind the live predictor's input layout.
struct Shadow<'a> {
    layout: &'a NoisePredictor,
    net: &'a MlpParams,
}

impl EpsilonModel for Shadow<'_> {
    fn action_dim(&self) -> usize {
        self.layout.action_dim()
    }

    fn state_dim(&self) -> usize {
        self.layout.state_dim()
    }

    fn predict_noise(
        &self,
        noisy_actions: &Matrix,
        states: &Matrix,
        steps: &[usize],
        total_steps: usize,
    ) -> Result<Matrix> {
        let inputs = self.layout.assemble_inputs(noisy_actions, states, steps, total_steps)?;
        self.net.forward_batch(&inputs)
    }
}

/// One assisted step: the executed action and what produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssistStep {
    pub action: Vec<f64>,
    /// Ratio used for this step.
    pub gamma: f64,
    /// Dot product of the operator's and the executed action.
    pub alignment: f64,
}

impl AssistiveAgent {
    /// Fresh agent with Glorot-initialized weights and an identity normalizer.
    pub fn new(task: Task, config: &AgentConfig, seed: u64) -> Result<Self> {
        config.train.validate()?;
        let schedule = DiffusionSchedule::new(config.schedule.clone())?;
        let mut rng = rng_for(seed, 0);
        let predictor =
            NoisePredictor::new(task.action_dim(), task.state_dim(), config.hidden.clone(), &mut rng)?;
        let ema = EmaState::new(&predictor.net, config.train.ema_decay)?;
        Ok(Self {
            task,
            predictor,
            schedule,
            normalizer: Normalizer::identity(task.state_dim(), task.action_dim()),
            ema,
            train_config: config.train.clone(),
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    fn served(&self) -> Shadow<'_> {
        Shadow {
            layout: &self.predictor,
            net: &self.ema.shadow,
        }
    }

    /// Snapshot of the served weights as a standalone predictor.
    pub fn served_predictor(&self) -> Result<NoisePredictor> {
        NoisePredictor::from_net(
            self.ema.shadow.clone(),
            self.predictor.action_dim(),
            self.predictor.state_dim(),
        )
    }

    fn normalize_rows<S: AsRef<[f64]>>(&self, rows: &[S], state: bool) -> Result<Matrix> {
        let (map, dim) = if state {
            (&self.normalizer.state, self.task.state_dim())
        } else {
            (&self.normalizer.action, self.task.action_dim())
        };
        let mut out = Matrix::zeros(rows.len(), dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(shape_err(format!("{} expects width {dim}, got {}", self.task, r.len())));
            }
            out.row_mut(i).copy_from_slice(&map.forward(r));
        }
        Ok(out)
    }

    /// Fully autonomous actions: pure noise denoised through all `K` steps.
    pub fn act_autonomous_batch<S: AsRef<[f64]>, R: Rng>(
        &self,
        states: &[S],
        rngs: &mut [R],
    ) -> Result<Vec<Vec<f64>>> {
        if rngs.len() != states.len() {
            return Err(shape_err("one generator per state is required"));
        }
        let s = self.normalize_rows(states, true)?;
        let adim = self.task.action_dim();
        let mut start = Matrix::zeros(states.len(), adim);
        for (i, rng) in rngs.iter_mut().enumerate() {
            for v in start.row_mut(i) {
                *v = normal(rng);
            }
        }
        let k = self.schedule.steps();
        let z = denoise_batch(&self.served(), &self.schedule, &start, &s, &vec![k; states.len()], rngs)?;
        let bounds = self.task.action_bounds();
        Ok((0..z.rows())
            .map(|i| {
                let mut a = self.normalizer.action.inverse(z.row(i));
                bounds.clip(&mut a);
                a
            })
            .collect())
    }

    pub fn act_autonomous<R: Rng>(&self, state: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut out = self.act_autonomous_batch(&[state], std::slice::from_mut(rng))?;
        Ok(out.remove(0))
    }

    /// Shared-control actions for a batch of independent sessions.
    ///
    /// Each row uses its ratio's current `gamma`; afterwards the ratio
    /// observes the (human, executed) pair, which drives the adaptive update
    /// for the next step. Rows at `gamma = 0` return the (clipped) human
    /// action unchanged.
    pub fn act_assisted_batch<S: AsRef<[f64]>, H: AsRef<[f64]>, R: Rng>(
        &self,
        states: &[S],
        humans: &[H],
        ratios: &mut [ControlRatio],
        rngs: &mut [R],
    ) -> Result<Vec<AssistStep>> {
        let n = states.len();
        if humans.len() != n || ratios.len() != n || rngs.len() != n {
            return Err(shape_err("assisted batch parts disagree in length"));
        }
        let bounds = self.task.action_bounds();
        let clipped: Vec<Vec<f64>> = humans
            .iter()
            .map(|h| {
                let mut h = h.as_ref().to_vec();
                bounds.clip(&mut h);
                h
            })
            .collect();
        let s = self.normalize_rows(states, true)?;
        let h = self.normalize_rows(&clipped, false)?;
        let gammas: Vec<f64> = ratios.iter().map(|r| r.gamma()).collect();
        let norm_bounds = self.normalizer.action.map_bounds(&bounds)?;
        let z = blend_diffusion_batch(&self.served(), &self.schedule, &h, &s, &gammas, &norm_bounds, rngs)?;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let step = crate::shared_control::gamma_to_step(gammas[i], self.schedule.steps())?;
            let action = if step == 0 {
                clipped[i].clone()
            } else {
                let mut a = self.normalizer.action.inverse(z.row(i));
                bounds.clip(&mut a);
                a
            };
            let alignment = preference_alignment(&clipped[i], &action)?;
            ratios[i].observe(&clipped[i], &action);
            out.push(AssistStep {
                action,
                gamma: gammas[i],
                alignment,
            });
        }
        Ok(out)
    }

    pub fn act_assisted<R: Rng>(
        &self,
        state: &[f64],
        human: &[f64],
        ratio: &mut ControlRatio,
        rng: &mut R,
    ) -> Result<AssistStep> {
        let mut out = self.act_assisted_batch(
            &[state],
            &[human],
            std::slice::from_mut(ratio),
            std::slice::from_mut(rng),
        )?;
        Ok(out.remove(0))
    }

    pub fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            format_version: AGENT_FORMAT_VERSION,
            task: self.task,
            network: NetworkCheckpoint::capture(&self.predictor.net, Some(&self.ema), None),
            normalizer: self.normalizer.clone(),
            schedule: self.schedule.config().clone(),
            train_config: self.train_config.clone(),
        }
    }

    /// Rebuilds an agent, refusing checkpoints written for another task.
    pub fn from_checkpoint(ckpt: &AgentCheckpoint, task: Task) -> Result<Self> {
        if ckpt.format_version != AGENT_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: ckpt.format_version,
                expected: AGENT_FORMAT_VERSION,
            });
        }
        if ckpt.task != task {
            return Err(Error::Config(format!(
                "checkpoint was trained on {}, not {task}",
                ckpt.task
            )));
        }
        let net = ckpt.network.live()?;
        let predictor = NoisePredictor::from_net(net, task.action_dim(), task.state_dim())?;
        let ema = match ckpt.network.ema_state()? {
            Some(e) => e,
            None => EmaState::new(&predictor.net, ckpt.train_config.ema_decay)?,
        };
        ckpt.normalizer.validate()?;
        if ckpt.normalizer.state.dim() != task.state_dim() || ckpt.normalizer.action.dim() != task.action_dim() {
            return Err(shape_err("normalizer does not match the task"));
        }
        Ok(Self {
            task,
            predictor,
            schedule: DiffusionSchedule::new(ckpt.schedule.clone())?,
            normalizer: ckpt.normalizer.clone(),
            ema,
            train_config: ckpt.train_config.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(&self.checkpoint(), path)
    }

    pub fn load(path: &Path, task: Task) -> Result<Self> {
        Self::from_checkpoint(&load_json(path)?, task)
    }
}

/// Everything needed to rebuild an [`AssistiveAgent`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub format_version: u32,
    pub task: Task,
    pub network: NetworkCheckpoint,
    pub normalizer: Normalizer,
    pub schedule: ScheduleConfig,
    pub train_config: TrainConfig,
}

/// Trains the noise predictor on `samples` (raw units; normalized with the
/// agent's current normalizer). Continues from the live weights with a fresh
/// optimizer and returns the mean loss of every epoch.
pub fn train_diffusion(agent: &mut AssistiveAgent, samples: &Samples, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if cfg.epochs == 0 {
        return Ok(Vec::new());
    }
    let data = samples.normalized(&agent.normalizer)?;
    let mut rng = rng_for(cfg.seed, 4);
    let mut opt = OptimizerState::new(
        &agent.predictor.net,
        AdamWConfig {
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
    );
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(chunk);
            let out = ddpm_loss(&agent.predictor, &agent.schedule, &batch.states, &batch.actions, cfg, &mut rng)
                .map_err(|e| match e {
                    Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}: {msg}")),
                    other => other,
                })?;
            adamw_step(&mut agent.predictor.net, &out.grads, &mut opt)?;
            agent.ema.update_warm(&agent.predictor.net)?;
            total += out.loss * chunk.len() as f64;
        }
        history.push(total / n as f64);
    }
    agent.train_config = cfg.clone();
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::reset;
    use crate::shared_control::RatioMode;

    fn small_config() -> AgentConfig {
        AgentConfig {
            hidden: vec![16, 16],
            ..AgentConfig::default()
        }
    }

    #[test]
    fn zero_gamma_is_identity() {
        let agent = AssistiveAgent::new(Task::PickPlace, &small_config(), 1).unwrap();
        let s = reset(Task::PickPlace, 0);
        let h = [0.013, -0.049, 0.17];
        let mut ratio = ControlRatio::manual(0.0).unwrap();
        let mut rng = rng_for(0, 0);
        let step = agent.act_assisted(&s.values, &h, &mut ratio, &mut rng).unwrap();
        assert_eq!(step.action, h.to_vec());
        assert_eq!(step.gamma, 0.0);
    }

    #[test]
    fn untrained_actions_stay_in_bounds() {
        for task in Task::ALL {
            let agent = AssistiveAgent::new(task, &small_config(), 2).unwrap();
            let bounds = task.action_bounds();
            let states: Vec<Vec<f64>> = (0..64).map(|i| reset(task, i).values).collect();
            let mut rngs: Vec<_> = (0..64).map(|i| rng_for(i, 9)).collect();
            for a in agent.act_autonomous_batch(&states, &mut rngs).unwrap() {
                assert!(bounds.contains(&a));
            }
        }
    }

    #[test]
    fn adaptive_first_step_keeps_gamma() {
        let agent = AssistiveAgent::new(Task::PushCube, &small_config(), 3).unwrap();
        let s = reset(Task::PushCube, 0);
        let mut ratio = ControlRatio::adaptive(0.4).unwrap();
        assert_eq!(ratio.mode, RatioMode::Adaptive);
        let mut rng = rng_for(1, 0);
        let step = agent.act_assisted(&s.values, &[0.02, 0.03], &mut ratio, &mut rng).unwrap();
        assert_eq!(step.gamma, 0.4);
    }

    #[test]
    fn zero_epochs_leave_agent_unchanged() {
        let mut agent = AssistiveAgent::new(Task::PushCube, &small_config(), 4).unwrap();
        let before = agent.clone();
        let samples = Samples::from_pairs(&[reset(Task::PushCube, 0).values], &[vec![0.01, 0.02]]).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train_diffusion(&mut agent, &samples, &cfg).unwrap().is_empty());
        assert_eq!(agent, before);
    }

    #[test]
    fn checkpoint_rejects_other_task() {
        let agent = AssistiveAgent::new(Task::PushCube, &small_config(), 5).unwrap();
        let ckpt = agent.checkpoint();
        assert!(AssistiveAgent::from_checkpoint(&ckpt, Task::Latch).is_err());
        assert_eq!(AssistiveAgent::from_checkpoint(&ckpt, Task::PushCube).unwrap(), agent);
    }
}
