use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::normalizer::{Normalizer, Samples};
use crate::envs::Task;
use crate::error::{shape_err, Error, Result};
use crate::nn::{
    adamw_step, load_json, save_json, Activation, AdamWConfig, Matrix, MlpParams, MlpSpec,
    NetworkCheckpoint,
};
use crate::rng::rng_for;
use crate::shared_control::blend_linear;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128; 3],
            epochs: 100,
            batch_size: 64,
            learning_rate: 2e-3,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

/// Deterministic regression policy `π(s)` trained with mean squared error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcAgent {
    task: Task,
    pub net: MlpParams,
    pub normalizer: Normalizer,
}

impl BcAgent {
    pub fn new(task: Task, config: &BcConfig) -> Result<Self> {
        let spec = MlpSpec::new(task.state_dim(), config.hidden.clone(), task.action_dim(), Activation::ReLU)?;
        let net = MlpParams::init(spec, &mut rng_for(config.seed, 0))?;
        Ok(Self {
            task,
            net,
            normalizer: Normalizer::identity(task.state_dim(), task.action_dim()),
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Raw-unit predictions without clipping.
    pub fn predict<S: AsRef<[f64]>>(&self, states: &[S]) -> Result<Vec<Vec<f64>>> {
        let sdim = self.task.state_dim();
        let mut x = Matrix::zeros(states.len(), sdim);
        for (i, s) in states.iter().enumerate() {
            let s = s.as_ref();
            if s.len() != sdim {
                return Err(shape_err(format!("{} expects width {sdim}, got {}", self.task, s.len())));
            }
            x.row_mut(i).copy_from_slice(&self.normalizer.state.forward(s));
        }
        let z = self.net.forward_batch(&x)?;
        Ok((0..z.rows()).map(|i| self.normalizer.action.inverse(z.row(i))).collect())
    }

    /// Policy actions clipped to the task bounds.
    pub fn act_batch<S: AsRef<[f64]>>(&self, states: &[S]) -> Result<Vec<Vec<f64>>> {
        let bounds = self.task.action_bounds();
        let mut out = self.predict(states)?;
        for a in &mut out {
            bounds.clip(a);
        }
        Ok(out)
    }

    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.act_batch(&[state])?.remove(0))
    }

    /// Linear shared control `(1−gamma)·human + gamma·π(s)`.
    pub fn act_blended(&self, state: &[f64], human: &[f64], gamma: f64) -> Result<Vec<f64>> {
        let agent = self.act(state)?;
        blend_linear(human, &agent, gamma, &self.task.action_bounds())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(&BcCheckpoint::capture(self), path)
    }

    pub fn load(path: &Path, task: Task) -> Result<Self> {
        load_json::<BcCheckpoint>(path)?.restore(task)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcCheckpoint {
    pub task: Task,
    pub network: NetworkCheckpoint,
    pub normalizer: Normalizer,
}

impl BcCheckpoint {
    pub fn capture(agent: &BcAgent) -> Self {
        Self {
            task: agent.task,
            network: NetworkCheckpoint::capture(&agent.net, None, None),
            normalizer: agent.normalizer.clone(),
        }
    }

    pub fn restore(&self, task: Task) -> Result<BcAgent> {
        if self.task != task {
            return Err(Error::Config(format!("checkpoint was trained on {}, not {task}", self.task)));
        }
        let net = self.network.live()?;
        let spec = net.spec();
        if spec.input_dim != task.state_dim() || spec.output_dim != task.action_dim() {
            return Err(shape_err("network does not match the task"));
        }
        self.normalizer.validate()?;
        Ok(BcAgent {
            task,
            net,
            normalizer: self.normalizer.clone(),
        })
    }
}

/// Mean-squared-error regression of normalized actions on normalized states.
/// Returns the mean loss of every epoch.
pub fn train_bc(agent: &mut BcAgent, samples: &Samples, cfg: &BcConfig) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if cfg.epochs == 0 {
        return Ok(Vec::new());
    }
    let data = samples.normalized(&agent.normalizer)?;
    let mut rng = rng_for(cfg.seed, 5);
    let mut opt = crate::nn::OptimizerState::new(
        &agent.net,
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
            let (pred, tape) = agent.net.forward_tape(&batch.states)?;
            let (loss, grad) = crate::diffusion::noise_mse(&pred, &batch.actions)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("epoch {epoch}: regression loss is {loss}")));
            }
            let (grads, _) = agent.net.backward(&tape, &grad)?;
            adamw_step(&mut agent.net, &grads, &mut opt)?;
            total += loss * chunk.len() as f64;
        }
        history.push(total / n as f64);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_epochs_unchanged() {
        let mut agent = BcAgent::new(Task::Latch, &BcConfig::default()).unwrap();
        let before = agent.clone();
        let samples = Samples::from_pairs(&[vec![0.0; 6]], &[vec![0.0; 3]]).unwrap();
        let cfg = BcConfig {
            epochs: 0,
            ..BcConfig::default()
        };
        train_bc(&mut agent, &samples, &cfg).unwrap();
        assert_eq!(agent, before);
    }

    #[test]
    fn checkpoint_round_trip() {
        let agent = BcAgent::new(Task::PushCube, &BcConfig::default()).unwrap();
        let ckpt = BcCheckpoint::capture(&agent);
        assert_eq!(ckpt.restore(Task::PushCube).unwrap(), agent);
        assert!(ckpt.restore(Task::PickPlace).is_err());
    }
}
