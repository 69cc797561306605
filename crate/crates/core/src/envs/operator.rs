//! Simulated teleoperators: the scripted expert seen through an imperfect
//! interface.
//!
//! Corruption, in order: the operator misjudges where the goal is by a fixed
//! per-episode offset (`waypoint_jitter`), reacts `lag_steps` late, adds
//! Gaussian noise of `noise_std` times the action bound, and drops the
//! command entirely with probability `dropout_prob`.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::expert::expert_action;
use super::{EnvState, Task};
use crate::error::{Error, Result};
use crate::rng::{mix_seed, normal, rng_for, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorProfile {
    /// Per-step noise std as a fraction of each coordinate's bound.
    pub noise_std: f64,
    pub lag_steps: usize,
    pub dropout_prob: f64,
    /// Std of the per-episode goal misperception, in workspace units.
    pub waypoint_jitter: f64,
    pub seed: u64,
}

impl Default for OperatorProfile {
    fn default() -> Self {
        Self::perfect()
    }
}

impl OperatorProfile {
    /// The expert itself.
    pub fn perfect() -> Self {
        Self {
            noise_std: 0.0,
            lag_steps: 0,
            dropout_prob: 0.0,
            waypoint_jitter: 0.0,
            seed: 0,
        }
    }

    /// An operator who mostly misjudges the goal, with light noise and
    /// dropouts. Succeeds about half the time on PushCube unassisted.
    pub fn calibrated() -> Self {
        Self {
            noise_std: 0.05,
            lag_steps: 1,
            dropout_prob: 0.05,
            waypoint_jitter: 0.1,
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.noise_std) || !finite_nonneg(self.waypoint_jitter) {
            return Err(Error::Config("operator noise must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::Config("dropout probability must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Source of human actions for a rollout.
pub trait Operator {
    fn act(&mut self, state: &EnvState) -> Vec<f64>;
}

/// Scripted expert corrupted according to an [`OperatorProfile`]. One
/// instance drives one episode.
#[derive(Debug, Clone)]
pub struct SimulatedOperator {
    task: Task,
    profile: OperatorProfile,
    rng: SimRng,
    pending: VecDeque<Vec<f64>>,
    goal_offset: [f64; 2],
}

impl SimulatedOperator {
    pub fn new(task: Task, profile: OperatorProfile, episode: u64) -> Result<Self> {
        profile.validate()?;
        let mut rng = rng_for(mix_seed(profile.seed, episode), 1);
        let goal_offset = [
            profile.waypoint_jitter * normal(&mut rng),
            profile.waypoint_jitter * normal(&mut rng),
        ];
        Ok(Self {
            task,
            profile,
            rng,
            pending: VecDeque::new(),
            goal_offset,
        })
    }

    pub fn profile(&self) -> &OperatorProfile {
        &self.profile
    }

    pub fn goal_offset(&self) -> [f64; 2] {
        self.goal_offset
    }

    /// The state as the operator believes it to be.
    pub fn perceive(&self, state: &EnvState) -> Vec<f64> {
        let mut v = state.values.clone();
        let goal = match self.task {
            Task::PickPlace => 5,
            Task::PushCube | Task::Latch => 4,
        };
        v[goal] += self.goal_offset[0];
        v[goal + 1] += self.goal_offset[1];
        v
    }

    /// Lag, noise and dropout applied to an expert action, without clipping.
    pub fn perturb(&mut self, expert: &[f64]) -> Vec<f64> {
        self.pending.push_back(expert.to_vec());
        let delayed = if self.pending.len() > self.profile.lag_steps {
            self.pending.pop_front().unwrap_or_default()
        } else {
            vec![0.0; expert.len()]
        };
        let limits = self.task.action_limits();
        let mut out: Vec<f64> = delayed
            .iter()
            .zip(limits)
            .map(|(a, lim)| a + self.profile.noise_std * lim * normal(&mut self.rng))
            .collect();
        let dropped: f64 = self.rng.random();
        if dropped < self.profile.dropout_prob {
            out.iter_mut().for_each(|v| *v = 0.0);
        }
        out
    }

    /// [`SimulatedOperator::perturb`] followed by clipping to the task bounds.
    pub fn corrupt(&mut self, expert: &[f64]) -> Vec<f64> {
        let mut out = self.perturb(expert);
        self.task.action_bounds().clip(&mut out);
        out
    }
}

impl Operator for SimulatedOperator {
    fn act(&mut self, state: &EnvState) -> Vec<f64> {
        let perceived = self.perceive(state);
        let expert = expert_action(self.task, &perceived);
        self.corrupt(&expert)
    }
}
