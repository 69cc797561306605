use serde::{Deserialize, Serialize};

use crate::agents::Samples;
use crate::envs::{Task, MAX_STEPS};
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Who was in control while a trajectory was recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectionMode {
    HumanOnly,
    Shared,
    Autonomous,
}

impl CollectionMode {
    /// Dataset label suffix (`10H`, `30S`, `5A`).
    pub fn letter(self) -> char {
        match self {
            CollectionMode::HumanOnly => 'H',
            CollectionMode::Shared => 'S',
            CollectionMode::Autonomous => 'A',
        }
    }
}

/// One control step: the state before it and the actions involved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub human_action: Vec<f64>,
    /// The action actually executed.
    pub shared_action: Vec<f64>,
    pub gamma: f64,
    pub alignment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task: Task,
    pub seed: u64,
    pub mode: CollectionMode,
    pub success: bool,
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.transitions.len()
    }

    /// Simulated control steps spent on this episode.
    pub fn wall_steps(&self) -> usize {
        self.horizon()
    }

    /// Succeeded within the step cap.
    pub fn is_valid(&self) -> bool {
        self.success && !self.transitions.is_empty() && self.horizon() <= MAX_STEPS
    }

    pub fn mean_alignment(&self) -> Option<f64> {
        if self.transitions.is_empty() {
            return None;
        }
        let sum: f64 = self.transitions.iter().map(|t| t.alignment).sum();
        Some(sum / self.transitions.len() as f64)
    }
}

/// `(state, executed action)` rows of every transition.
pub fn training_samples(dataset: &[Trajectory]) -> Result<Samples> {
    let rows: Vec<&Transition> = dataset.iter().flat_map(|t| &t.transitions).collect();
    if rows.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let states: Vec<&[f64]> = rows.iter().map(|t| t.state.as_slice()).collect();
    let actions: Vec<&[f64]> = rows.iter().map(|t| t.shared_action.as_slice()).collect();
    Samples::new(Matrix::from_rows(&states)?, Matrix::from_rows(&actions)?)
}

/// Trajectory counts per collection mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSizes {
    pub human_only: usize,
    pub shared: usize,
    pub autonomous: usize,
    pub transitions: usize,
}

impl DatasetSizes {
    pub fn of(dataset: &[Trajectory]) -> Self {
        let mut out = Self::default();
        for t in dataset {
            match t.mode {
                CollectionMode::HumanOnly => out.human_only += 1,
                CollectionMode::Shared => out.shared += 1,
                CollectionMode::Autonomous => out.autonomous += 1,
            }
            out.transitions += t.horizon();
        }
        out
    }

    pub fn total(&self) -> usize {
        self.human_only + self.shared + self.autonomous
    }

    /// Label in the style `10H + 30S`.
    pub fn label(&self) -> String {
        let parts: Vec<String> = [
            (self.human_only, 'H'),
            (self.shared, 'S'),
            (self.autonomous, 'A'),
        ]
        .into_iter()
        .filter(|(n, _)| *n > 0)
        .map(|(n, c)| format!("{n}{c}"))
        .collect();
        if parts.is_empty() {
            "empty".into()
        } else {
            parts.join(" + ")
        }
    }
}
