//! Planar kinematic manipulation tasks on the `[-1, 1]²` workspace.
//!
//! Actions are per-step deltas clipped to the task's bounds. There is no
//! dynamics: contacts are resolved geometrically each step. Episodes are
//! truncated after [`MAX_STEPS`] steps; success is latched once reached.

mod expert;
mod operator;
mod tasks;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::rng::{mix_seed, rng_for};
use crate::shared_control::Bounds;

pub use expert::scripted_expert;
pub use operator::{Operator, OperatorProfile, SimulatedOperator};
pub use tasks::geometry;

pub const MAX_STEPS: usize = 300;
pub const WORKSPACE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    PickPlace,
    PushCube,
    Latch,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::PickPlace, Task::PushCube, Task::Latch];

    pub fn name(self) -> &'static str {
        match self {
            Task::PickPlace => "pick_place",
            Task::PushCube => "push_cube",
            Task::Latch => "latch",
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            Task::PickPlace => 8,
            Task::PushCube | Task::Latch => 6,
        }
    }

    pub fn action_dim(self) -> usize {
        self.action_limits().len()
    }

    /// Symmetric per-coordinate action limits.
    pub fn action_limits(self) -> &'static [f64] {
        match self {
            Task::PickPlace => &[0.05, 0.05, 0.2],
            Task::PushCube => &[0.05, 0.05],
            Task::Latch => &[0.05, 0.05, 0.1],
        }
    }

    pub fn action_bounds(self) -> Bounds {
        Bounds::symmetric(self.action_limits())
    }

    pub fn state_labels(self) -> &'static [&'static str] {
        match self {
            Task::PickPlace => &[
                "ee_x", "ee_y", "grip", "object_x", "object_y", "container_x", "container_y",
                "grasped",
            ],
            Task::PushCube => &["ee_x", "ee_y", "cube_x", "cube_y", "target_x", "target_y"],
            Task::Latch => &["ee_x", "ee_y", "handle_angle", "door_open", "base_x", "base_y"],
        }
    }

    pub fn action_labels(self) -> &'static [&'static str] {
        match self {
            Task::PickPlace => &["dx", "dy", "dgrip"],
            Task::PushCube => &["dx", "dy"],
            Task::Latch => &["dx", "dy", "dphi"],
        }
    }

    pub fn info(self) -> TaskInfo {
        TaskInfo {
            name: self.name().to_string(),
            state_dim: self.state_dim(),
            action_dim: self.action_dim(),
            state_labels: self.state_labels().iter().map(|s| s.to_string()).collect(),
            action_labels: self.action_labels().iter().map(|s| s.to_string()).collect(),
            action_limits: self.action_limits().to_vec(),
            max_steps: MAX_STEPS,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task {s:?}")))
    }
}

/// Task metadata for clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInfo {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub state_labels: Vec<String>,
    pub action_labels: Vec<String>,
    pub action_limits: Vec<f64>,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub task: Task,
    pub values: Vec<f64>,
    pub step_index: usize,
    pub success: bool,
}

impl EnvState {
    /// Truncated episodes accept no further steps.
    pub fn is_truncated(&self) -> bool {
        self.step_index >= MAX_STEPS
    }

    /// Either succeeded or truncated.
    pub fn is_done(&self) -> bool {
        self.success || self.is_truncated()
    }

    pub fn ee(&self) -> [f64; 2] {
        [self.values[0], self.values[1]]
    }
}

/// Initial state for `seed`: end effector at home, objects uniform in their
/// randomization squares.
pub fn reset(task: Task, seed: u64) -> EnvState {
    let mut rng = rng_for(mix_seed(seed, task as u64), 0);
    reset_with(task, &mut rng)
}

pub fn reset_with<R: Rng + ?Sized>(task: Task, rng: &mut R) -> EnvState {
    EnvState {
        task,
        values: tasks::initial_values(task, rng),
        step_index: 0,
        success: false,
    }
}

/// Advances one step. The action is clipped to the task bounds first.
pub fn step(state: &EnvState, action: &[f64]) -> Result<EnvState> {
    if state.is_truncated() {
        return Err(Error::Contract(format!(
            "step called on a truncated episode (step {})",
            state.step_index
        )));
    }
    let task = state.task;
    if action.len() != task.action_dim() {
        return Err(shape_err(format!(
            "{task} expects {} action values, got {}",
            task.action_dim(),
            action.len()
        )));
    }
    if action.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("action contains NaN or infinity".into()));
    }
    let mut a = action.to_vec();
    task.action_bounds().clip(&mut a);
    let values = tasks::advance(task, &state.values, &a);
    let success = state.success || tasks::succeeded(task, &values);
    Ok(EnvState {
        task,
        values,
        step_index: state.step_index + 1,
        success,
    })
}

/// Whether the task's success predicate holds for raw state values.
pub fn success_predicate(task: Task, values: &[f64]) -> bool {
    tasks::succeeded(task, values)
}

/// Checks the workspace, angle and fraction bounds of a state.
pub fn within_bounds(state: &EnvState) -> bool {
    tasks::within_bounds(state.task, &state.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for t in Task::ALL {
            assert_eq!(t.name().parse::<Task>().unwrap(), t);
            assert_eq!(t.state_labels().len(), t.state_dim());
            assert_eq!(t.action_labels().len(), t.action_dim());
        }
        assert!("tool_use".parse::<Task>().is_err());
    }

    #[test]
    fn reset_is_seeded() {
        for t in Task::ALL {
            assert_eq!(reset(t, 17), reset(t, 17));
            assert_ne!(reset(t, 17), reset(t, 18));
        }
    }

    #[test]
    fn zero_action_only_advances_time() {
        for t in Task::ALL {
            let s0 = reset(t, 3);
            let s1 = step(&s0, &vec![0.0; t.action_dim()]).unwrap();
            assert_eq!(s1.values, s0.values);
            assert_eq!(s1.step_index, 1);
            assert!(!s1.success);
        }
    }

    #[test]
    fn truncation_is_enforced() {
        let mut s = reset(Task::PushCube, 0);
        for _ in 0..MAX_STEPS {
            s = step(&s, &[0.0, 0.0]).unwrap();
        }
        assert!(s.is_truncated());
        assert!(matches!(step(&s, &[0.0, 0.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn bad_actions() {
        let s = reset(Task::Latch, 0);
        assert!(step(&s, &[0.0, 0.0]).is_err());
        assert!(step(&s, &[f64::NAN, 0.0, 0.0]).is_err());
    }
}
