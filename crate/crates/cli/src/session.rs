//! One live teleoperation session: an env, an optional agent snapshot and a
//! recording buffer, advanced one step per tick.
//!
//! Everything here is synchronous; the server owns a session per socket and
//! calls [`Session::handle_text`] for each frame and [`Session::tick`] on its
//! timer, so all mutation happens on one task.

use std::path::PathBuf;
use std::sync::Arc;

use teleassist::agents::AssistiveAgent;
use teleassist::envs::{reset, step, EnvState, Task};
use teleassist::jointloop::{
    compute_metrics, write_trajectory, Attempt, CollectionMode, DatasetSizes, GammaPolicy, Metrics, RoundReport,
    Trajectory, Transition,
};
use teleassist::rng::{mix_seed, rng_for, SimRng};
use teleassist::shared_control::{preference_alignment, ControlRatio};

use crate::protocol::{action_vector, AssistMode, ClientMessage, EpisodeSaved, ServerMessage, StateMessage};

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub task: Task,
    /// Seeds episodes that are reset without an explicit seed.
    pub seed: u64,
    pub gamma: GammaPolicy,
    /// Directory receiving saved episodes.
    pub store: PathBuf,
}

pub struct Session {
    id: u64,
    cfg: SessionConfig,
    agent: Option<Arc<AssistiveAgent>>,
    assist: bool,
    policy: GammaPolicy,
    ratio: ControlRatio,
    rng: SimRng,
    state: EnvState,
    episode_seed: u64,
    episodes_started: u64,
    tick: u64,
    pending: Option<Vec<f64>>,
    last_human: Vec<f64>,
    last_executed: Vec<f64>,
    last_alignment: Option<f64>,
    recording: Vec<Transition>,
    assisted_ticks: usize,
    saved_current: bool,
    finished_recorded: bool,
    attempts: Vec<Attempt>,
    saved: Vec<Trajectory>,
}

impl Session {
    /// Starts on the first auto-seeded episode, assisted iff an agent is given.
    pub fn new(id: u64, cfg: SessionConfig, agent: Option<Arc<AssistiveAgent>>) -> Result<Self, String> {
        if let Some(a) = &agent {
            if a.task() != cfg.task {
                return Err(format!("agent was trained on {}, session runs {}", a.task(), cfg.task));
            }
        }
        let ratio = cfg.gamma.ratio().map_err(|e| e.to_string())?;
        let zeros = vec![0.0; cfg.task.action_dim()];
        let seed = mix_seed(cfg.seed, 0);
        Ok(Self {
            id,
            assist: agent.is_some(),
            policy: cfg.gamma,
            rng: rng_for(seed, 2),
            state: reset(cfg.task, seed),
            episode_seed: seed,
            episodes_started: 1,
            agent,
            ratio,
            cfg,
            tick: 0,
            pending: None,
            last_human: zeros.clone(),
            last_executed: zeros,
            last_alignment: None,
            recording: Vec::new(),
            assisted_ticks: 0,
            saved_current: false,
            finished_recorded: false,
            attempts: Vec::new(),
            saved: Vec::new(),
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn env(&self) -> &EnvState {
        &self.state
    }

    pub fn assist(&self) -> bool {
        self.assist
    }

    /// Parses one text frame and applies it. Malformed input yields an error
    /// reply and leaves the session untouched.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match ClientMessage::parse(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => vec![ServerMessage::error(e)],
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        match msg {
            ClientMessage::HumanAction { dx, dy, dgrip, dphi } => {
                match action_vector(self.cfg.task, dx, dy, dgrip, dphi) {
                    // latest wins: earlier input in the same tick is dropped
                    Ok(a) => {
                        self.pending = Some(a);
                        Vec::new()
                    }
                    Err(e) => vec![ServerMessage::error(e)],
                }
            }
            ClientMessage::SetGamma { value } => match value.ratio() {
                Ok(ratio) => {
                    self.policy = value;
                    self.ratio = ratio;
                    vec![self.state_message()]
                }
                Err(e) => vec![ServerMessage::error(e.to_string())],
            },
            ClientMessage::SetMode { mode } => match mode {
                AssistMode::AssistOn if self.agent.is_none() => {
                    vec![ServerMessage::error("no agent loaded; assistance is unavailable")]
                }
                m => {
                    self.assist = m == AssistMode::AssistOn;
                    vec![self.state_message()]
                }
            },
            ClientMessage::Reset { seed } => {
                let seed = seed.unwrap_or_else(|| mix_seed(self.cfg.seed, self.episodes_started));
                self.start_episode(seed);
                vec![self.state_message()]
            }
            ClientMessage::SaveEpisode => self.save_episode(),
        }
    }

    fn start_episode(&mut self, seed: u64) {
        self.episodes_started += 1;
        self.episode_seed = seed;
        self.state = reset(self.cfg.task, seed);
        self.rng = rng_for(seed, 2);
        self.ratio = self.policy.ratio().expect("policy was validated when set");
        self.pending = None;
        let zeros = vec![0.0; self.cfg.task.action_dim()];
        self.last_human = zeros.clone();
        self.last_executed = zeros;
        self.last_alignment = None;
        self.recording.clear();
        self.assisted_ticks = 0;
        self.saved_current = false;
        self.finished_recorded = false;
    }

    /// Advances the env by exactly one step with the latest input, or the
    /// zero action if none arrived, and returns the new state message.
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        self.tick += 1;
        let human = self.pending.take().unwrap_or_else(|| vec![0.0; self.cfg.task.action_dim()]);
        if self.state.is_done() {
            return vec![self.state_message()];
        }
        let stepped = self.step_with(&human);
        match stepped {
            Ok(()) => vec![self.state_message()],
            Err(e) => vec![ServerMessage::error(e), self.state_message()],
        }
    }

    fn step_with(&mut self, human: &[f64]) -> Result<(), String> {
        let mut human = human.to_vec();
        self.cfg.task.action_bounds().clip(&mut human);
        let (executed, gamma, alignment) = match (&self.agent, self.assist) {
            (Some(agent), true) => {
                let s = agent
                    .act_assisted(&self.state.values, &human, &mut self.ratio, &mut self.rng)
                    .map_err(|e| e.to_string())?;
                self.assisted_ticks += 1;
                (s.action, s.gamma, s.alignment)
            }
            _ => {
                let align = preference_alignment(&human, &human).map_err(|e| e.to_string())?;
                (human.clone(), 0.0, align)
            }
        };
        let next = step(&self.state, &executed).map_err(|e| e.to_string())?;
        self.recording.push(Transition {
            state: std::mem::replace(&mut self.state, next).values,
            human_action: human.clone(),
            shared_action: executed.clone(),
            gamma,
            alignment,
        });
        self.last_human = human;
        self.last_executed = executed;
        self.last_alignment = Some(alignment);
        if self.state.is_done() && !self.finished_recorded {
            self.finished_recorded = true;
            let traj = self.trajectory();
            self.attempts.push(Attempt::from(&traj));
        }
        Ok(())
    }

    fn trajectory(&self) -> Trajectory {
        Trajectory {
            task: self.cfg.task,
            seed: self.episode_seed,
            mode: if self.assisted_ticks > 0 {
                CollectionMode::Shared
            } else {
                CollectionMode::HumanOnly
            },
            success: self.state.success,
            transitions: self.recording.clone(),
        }
    }

    fn save_episode(&mut self) -> Vec<ServerMessage> {
        if self.recording.is_empty() {
            return vec![ServerMessage::error("nothing recorded since the last reset")];
        }
        if self.saved_current {
            return vec![ServerMessage::error("this episode is already saved; reset to record another")];
        }
        let traj = self.trajectory();
        let path = self
            .cfg
            .store
            .join(format!("session{:03}_episode{:05}.jsonl", self.id, self.saved.len()));
        if let Err(e) = write_trajectory(&traj, &path) {
            return vec![ServerMessage::error(format!("could not save episode: {e}"))];
        }
        self.saved_current = true;
        let saved = EpisodeSaved {
            path: path.display().to_string(),
            success: traj.success,
            horizon: traj.horizon(),
            saved: self.saved.len() + 1,
        };
        self.saved.push(traj);
        vec![
            ServerMessage::EpisodeSaved(saved),
            ServerMessage::RoundReport { report: self.report() },
        ]
    }

    /// Summary of this session as a single collection round.
    /// Before any episode has finished the metrics are all zero.
    pub fn report(&self) -> RoundReport {
        let metrics = compute_metrics(&self.attempts).unwrap_or(Metrics {
            attempts: 0,
            valid: 0,
            success_rate: 0.0,
            mean_horizon: None,
            collection_speed: 0.0,
        });
        let alignments: Vec<f64> = self.saved.iter().filter_map(|t| t.mean_alignment()).collect();
        RoundReport {
            round: 0,
            gamma: if self.assist && self.agent.is_some() {
                self.policy
            } else {
                GammaPolicy::Fixed(0.0)
            },
            n_target: self.saved.len(),
            dataset: DatasetSizes::of(&self.saved),
            metrics,
            mean_alignment: (!alignments.is_empty()).then(|| alignments.iter().sum::<f64>() / alignments.len() as f64),
            epochs: 0,
            final_loss: None,
            sweep: Vec::new(),
        }
    }

    pub fn state_message(&self) -> ServerMessage {
        let assisted = self.assist && self.agent.is_some();
        ServerMessage::State(StateMessage {
            session: self.id,
            tick: self.tick,
            task: self.cfg.task,
            seed: self.episode_seed,
            values: self.state.values.clone(),
            step_index: self.state.step_index,
            success: self.state.success,
            done: self.state.is_done(),
            assist: assisted,
            adaptive: matches!(self.policy, GammaPolicy::Adaptive(_)),
            gamma: if assisted { self.ratio.gamma() } else { 0.0 },
            alignment: self.last_alignment,
            human_action: self.last_human.clone(),
            executed_action: self.last_executed.clone(),
        })
    }
}
