//! Wire messages of the live service: JSON text frames with a `type` field.
//!
//! The message reference with one example per type lives in `protocol.md`
//! next to this crate's manifest.

use serde::{Deserialize, Serialize};
use teleassist::envs::Task;
use teleassist::jointloop::{GammaPolicy, RoundReport};

/// Messages a client may send.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// Operator input for the next tick. `dgrip` is read by pick_place and
    /// `dphi` by latch; both default to 0.
    HumanAction {
        dx: f64,
        dy: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dgrip: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dphi: Option<f64>,
    },
    SetGamma { value: GammaPolicy },
    SetMode { mode: AssistMode },
    Reset {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    SaveEpisode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssistMode {
    AssistOn,
    AssistOff,
}

/// Messages the service sends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(StateMessage),
    RoundReport { report: RoundReport },
    EpisodeSaved(EpisodeSaved),
    Error { message: String },
}

/// Snapshot broadcast once per tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub session: u64,
    pub tick: u64,
    pub task: Task,
    /// Seed the current episode was reset with.
    pub seed: u64,
    pub values: Vec<f64>,
    pub step_index: usize,
    pub success: bool,
    /// Succeeded or truncated; the env ignores input until `reset`.
    pub done: bool,
    pub assist: bool,
    pub adaptive: bool,
    pub gamma: f64,
    /// Dot product of the last human and executed actions.
    pub alignment: Option<f64>,
    /// Input applied on the last tick (zeros when idle).
    pub human_action: Vec<f64>,
    pub executed_action: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSaved {
    pub path: String,
    pub success: bool,
    pub horizon: usize,
    /// Episodes saved by this session so far.
    pub saved: usize,
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("client messages always serialize")
    }
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error {
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            ServerMessage::State(_) => "state",
            ServerMessage::RoundReport { .. } => "round_report",
            ServerMessage::EpisodeSaved(_) => "episode_saved",
            ServerMessage::Error { .. } => "error",
        }
    }
}

/// Action vector of a `human_action` message for `task`.
pub fn action_vector(task: Task, dx: f64, dy: f64, dgrip: Option<f64>, dphi: Option<f64>) -> Result<Vec<f64>, String> {
    let extra = match task {
        Task::PushCube => {
            if dgrip.is_some() || dphi.is_some() {
                return Err("push_cube actions take only dx and dy".into());
            }
            None
        }
        Task::PickPlace => {
            if dphi.is_some() {
                return Err("pick_place actions take dgrip, not dphi".into());
            }
            Some(dgrip.unwrap_or(0.0))
        }
        Task::Latch => {
            if dgrip.is_some() {
                return Err("latch actions take dphi, not dgrip".into());
            }
            Some(dphi.unwrap_or(0.0))
        }
    };
    let mut v = vec![dx, dy];
    v.extend(extra);
    if v.iter().any(|x| !x.is_finite()) {
        return Err("action components must be finite".into());
    }
    Ok(v)
}
