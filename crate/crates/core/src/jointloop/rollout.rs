//! Lockstep rollouts: many independent episodes advanced tick by tick so
//! that the agent sees one batched network call per tick.

use super::trajectory::{CollectionMode, Trajectory, Transition};
use crate::agents::{AssistiveAgent, BcAgent};
use crate::envs::{reset, step, EnvState, Operator, OperatorProfile, SimulatedOperator, Task};
use crate::error::Result;
use crate::rng::{rng_for, SimRng};
use crate::shared_control::{preference_alignment, ControlRatio};

/// What turns the operator's input into the executed action.
#[derive(Debug, Clone)]
pub enum Driver<'a> {
    /// The operator alone.
    Manual,
    /// Diffusion shared control; every episode starts from a copy of `ratio`.
    Assisted { agent: &'a AssistiveAgent, ratio: ControlRatio },
    /// Linear blend with a behavior-cloning policy.
    Linear { agent: &'a BcAgent, gamma: f64 },
    /// The diffusion agent alone.
    Autonomous(&'a AssistiveAgent),
    /// The behavior-cloning policy alone.
    Policy(&'a BcAgent),
}

impl Driver<'_> {
    pub fn mode(&self) -> CollectionMode {
        match self {
            Driver::Manual => CollectionMode::HumanOnly,
            Driver::Assisted { .. } | Driver::Linear { .. } => CollectionMode::Shared,
            Driver::Autonomous(_) | Driver::Policy(_) => CollectionMode::Autonomous,
        }
    }

    fn uses_operator(&self) -> bool {
        !matches!(self, Driver::Autonomous(_) | Driver::Policy(_))
    }
}

struct Episode {
    state: EnvState,
    operator: SimulatedOperator,
    ratio: Option<ControlRatio>,
    rng: SimRng,
    trajectory: Trajectory,
}

/// Runs one episode per seed to success or truncation. Results come back in
/// seed order and do not depend on how many episodes share the batch.
pub fn run_episodes(
    task: Task,
    profile: &OperatorProfile,
    driver: &Driver<'_>,
    seeds: &[u64],
) -> Result<Vec<Trajectory>> {
    let mode = driver.mode();
    let mut episodes = seeds
        .iter()
        .map(|&seed| {
            Ok(Episode {
                state: reset(task, seed),
                operator: SimulatedOperator::new(task, *profile, seed)?,
                ratio: match driver {
                    Driver::Assisted { ratio, .. } => Some(ratio.clone()),
                    _ => None,
                },
                rng: rng_for(seed, 2),
                trajectory: Trajectory {
                    task,
                    seed,
                    mode,
                    success: false,
                    transitions: Vec::new(),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    loop {
        let active: Vec<usize> = (0..episodes.len()).filter(|&i| !episodes[i].state.is_done()).collect();
        if active.is_empty() {
            break;
        }
        let states: Vec<Vec<f64>> = active.iter().map(|&i| episodes[i].state.values.clone()).collect();
        let humans: Vec<Vec<f64>> = if driver.uses_operator() {
            active
                .iter()
                .map(|&i| {
                    let ep = &mut episodes[i];
                    ep.operator.act(&ep.state)
                })
                .collect()
        } else {
            vec![vec![0.0; task.action_dim()]; active.len()]
        };
        // (executed, gamma, alignment) per active episode
        let executed: Vec<(Vec<f64>, f64, f64)> = match driver {
            Driver::Manual => humans
                .iter()
                .map(|h| Ok((h.clone(), 0.0, preference_alignment(h, h)?)))
                .collect::<Result<_>>()?,
            Driver::Assisted { agent, .. } => {
                let mut ratios: Vec<ControlRatio> = active
                    .iter()
                    .map(|&i| episodes[i].ratio.clone().expect("assisted episodes carry a ratio"))
                    .collect();
                let mut rngs: Vec<SimRng> = active.iter().map(|&i| episodes[i].rng.clone()).collect();
                let steps = agent.act_assisted_batch(&states, &humans, &mut ratios, &mut rngs)?;
                for ((&i, r), g) in active.iter().zip(ratios).zip(rngs) {
                    episodes[i].ratio = Some(r);
                    episodes[i].rng = g;
                }
                steps.into_iter().map(|s| (s.action, s.gamma, s.alignment)).collect()
            }
            Driver::Linear { agent, gamma } => {
                let bounds = task.action_bounds();
                let policy = agent.act_batch(&states)?;
                humans
                    .iter()
                    .zip(policy)
                    .map(|(h, p)| {
                        let a = crate::shared_control::blend_linear(h, &p, *gamma, &bounds)?;
                        let align = preference_alignment(h, &a)?;
                        Ok((a, *gamma, align))
                    })
                    .collect::<Result<_>>()?
            }
            Driver::Autonomous(agent) => {
                let mut rngs: Vec<SimRng> = active.iter().map(|&i| episodes[i].rng.clone()).collect();
                let actions = agent.act_autonomous_batch(&states, &mut rngs)?;
                for (&i, g) in active.iter().zip(rngs) {
                    episodes[i].rng = g;
                }
                actions.into_iter().map(|a| (a, 1.0, 0.0)).collect()
            }
            Driver::Policy(agent) => agent
                .act_batch(&states)?
                .into_iter()
                .map(|a| (a, 1.0, 0.0))
                .collect(),
        };
        for ((&i, (action, gamma, alignment)), human) in active.iter().zip(executed).zip(humans) {
            let ep = &mut episodes[i];
            let next = step(&ep.state, &action)?;
            ep.trajectory.transitions.push(Transition {
                state: std::mem::take(&mut ep.state.values),
                human_action: human,
                shared_action: action,
                gamma,
                alignment,
            });
            ep.state = next;
        }
    }

    Ok(episodes
        .into_iter()
        .map(|mut ep| {
            ep.trajectory.success = ep.state.success;
            ep.trajectory
        })
        .collect())
}
