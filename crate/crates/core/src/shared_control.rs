//! Blending operator and agent actions.
//!
//! Throughout, `gamma` is the agent's share of control: `0` leaves the
//! operator in full command, `1` hands control to the agent. For the
//! diffusion blend it selects the noising depth `k = round(gamma·K)`; for the
//! linear blend it weights the agent's action.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{denoise_batch, DiffusionSchedule, EpsilonModel};
use crate::error::{shape_err, Error, Result};
use crate::nn::Matrix;
use crate::rng::normal;

/// Norms below this leave an adaptive ratio unchanged.
pub const IDLE_NORM: f64 = 1e-8;
pub const DEFAULT_SMOOTHING: f64 = 0.8;

/// Per-coordinate box bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl Bounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() || low.iter().zip(&high).any(|(l, h)| !(l <= h)) {
            return Err(Error::Config("bounds need equal lengths and low <= high".into()));
        }
        Ok(Self { low, high })
    }

    pub fn symmetric(limits: &[f64]) -> Self {
        Self {
            low: limits.iter().map(|l| -l).collect(),
            high: limits.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn clip(&self, v: &mut [f64]) {
        for ((x, lo), hi) in v.iter_mut().zip(&self.low).zip(&self.high) {
            *x = x.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v
                .iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    Manual,
    Adaptive,
}

/// Which action coordinates enter the alignment angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentScope {
    #[default]
    Full,
    /// Only the leading planar translation `(dx, dy)`.
    Translation,
}

impl AlignmentScope {
    fn slice<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        match self {
            AlignmentScope::Full => v,
            AlignmentScope::Translation => &v[..v.len().min(2)],
        }
    }
}

/// The control ratio owned by one collection session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRatio {
    gamma: f64,
    pub mode: RatioMode,
    /// Weight on the previous ratio when adapting; `0` disables smoothing.
    pub smoothing: f64,
    pub scope: AlignmentScope,
    pub prev_human: Option<Vec<f64>>,
    pub prev_shared: Option<Vec<f64>>,
}

impl ControlRatio {
    pub fn manual(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self {
            gamma,
            mode: RatioMode::Manual,
            smoothing: DEFAULT_SMOOTHING,
            scope: AlignmentScope::Full,
            prev_human: None,
            prev_shared: None,
        })
    }

    pub fn adaptive(initial_gamma: f64) -> Result<Self> {
        Ok(Self {
            mode: RatioMode::Adaptive,
            ..Self::manual(initial_gamma)?
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_gamma(&mut self, gamma: f64) -> Result<()> {
        check_gamma(gamma)?;
        self.gamma = gamma;
        Ok(())
    }

    /// Records the actions of the step just executed; in adaptive mode the
    /// ratio is then updated from their alignment.
    pub fn observe(&mut self, human: &[f64], shared: &[f64]) {
        if self.mode == RatioMode::Adaptive {
            adapt_gamma(self, human, shared);
        }
        self.prev_human = Some(human.to_vec());
        self.prev_shared = Some(shared.to_vec());
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("control ratio {gamma} outside [0, 1]")));
    }
    Ok(())
}

/// `k = round(gamma·K)` (half away from zero), clamped to `[0, K]`.
pub fn gamma_to_step(gamma: f64, total_steps: usize) -> Result<usize> {
    check_gamma(gamma)?;
    Ok(((gamma * total_steps as f64).round() as usize).min(total_steps))
}

/// `½(1 + cos θ)` between two actions, or `None` if either is idle.
pub fn alignment_gamma(human: &[f64], shared: &[f64]) -> Option<f64> {
    let cos = cosine(human, shared)?;
    Some((0.5 * (1.0 + cos)).clamp(0.0, 1.0))
}

/// Adaptive update from the previous step's human and shared actions:
/// `gamma ← s·gamma + (1−s)·½(1+cos θ)` with `s = ratio.smoothing`. Idle
/// inputs leave the ratio unchanged.
pub fn adapt_gamma(ratio: &mut ControlRatio, human_prev: &[f64], shared_prev: &[f64]) -> f64 {
    let scope = ratio.scope;
    if let Some(target) = alignment_gamma(scope.slice(human_prev), scope.slice(shared_prev)) {
        let s = ratio.smoothing;
        ratio.gamma = if s == 0.0 {
            target
        } else {
            (s * ratio.gamma + (1.0 - s) * target).clamp(0.0, 1.0)
        };
    }
    ratio.gamma
}

/// Raw dot product between the operator's and the agent's actions.
pub fn preference_alignment(human: &[f64], agent: &[f64]) -> Result<f64> {
    if human.len() != agent.len() {
        return Err(shape_err("alignment needs equal-length actions"));
    }
    Ok(human.iter().zip(agent).map(|(a, b)| a * b).sum())
}

/// Cosine of the angle between two actions; `None` if either is idle.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na < IDLE_NORM || nb < IDLE_NORM {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Convex blend `(1−gamma)·human + gamma·agent`, clipped to `bounds`.
pub fn blend_linear(human: &[f64], agent: &[f64], gamma: f64, bounds: &Bounds) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    if human.len() != agent.len() || human.len() != bounds.dim() {
        return Err(shape_err("linear blend needs equal-length actions and bounds"));
    }
    let mut out: Vec<f64> = human
        .iter()
        .zip(agent)
        .map(|(h, r)| (1.0 - gamma) * h + gamma * r)
        .collect();
    bounds.clip(&mut out);
    Ok(out)
}

/// Diffusion blend for a batch of rows, each with its own ratio and
/// generator. Inputs must already be in the model's normalized space; the
/// result is clipped to `bounds` in that same space.
///
/// Per row: `k = round(gamma·K)`; the human action is pushed to step `k` with
/// the schedule's blend noise mode and denoised back to 0. Rows with `k = 0`
/// are returned untouched and draw nothing from their generator.
pub fn blend_diffusion_batch<E: EpsilonModel + ?Sized, R: Rng>(
    model: &E,
    schedule: &DiffusionSchedule,
    human: &Matrix,
    states: &Matrix,
    gammas: &[f64],
    bounds: &Bounds,
    rngs: &mut [R],
) -> Result<Matrix> {
    let n = human.rows();
    if gammas.len() != n || rngs.len() != n || states.rows() != n {
        return Err(shape_err("blend batch parts disagree in length"));
    }
    if human.cols() != bounds.dim() {
        return Err(shape_err("bounds do not match the action width"));
    }
    let total = schedule.steps();
    let steps = gammas
        .iter()
        .map(|&g| gamma_to_step(g, total))
        .collect::<Result<Vec<_>>>()?;
    let mut start = human.clone();
    for (i, &k) in steps.iter().enumerate() {
        if k == 0 {
            continue;
        }
        let signal = match schedule.blend_noise() {
            crate::diffusion::BlendNoise::Scaled => schedule.alpha_bar(k).sqrt(),
            crate::diffusion::BlendNoise::Additive => 1.0,
        };
        let spread = schedule.noise_std(k);
        let rng = &mut rngs[i];
        for v in start.row_mut(i) {
            *v = signal * *v + spread * normal(rng);
        }
    }
    let mut out = denoise_batch(model, schedule, &start, states, &steps, rngs)?;
    for (i, &k) in steps.iter().enumerate() {
        if k == 0 {
            out.row_mut(i).copy_from_slice(human.row(i));
        } else {
            bounds.clip(out.row_mut(i));
        }
    }
    Ok(out)
}

/// Single-action form of [`blend_diffusion_batch`].
pub fn blend_diffusion<E: EpsilonModel + ?Sized, R: Rng>(
    model: &E,
    schedule: &DiffusionSchedule,
    human: &[f64],
    state: &[f64],
    gamma: f64,
    bounds: &Bounds,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let out = blend_diffusion_batch(
        model,
        schedule,
        &Matrix::row_vector(human),
        &Matrix::row_vector(state),
        &[gamma],
        bounds,
        std::slice::from_mut(rng),
    )?;
    Ok(out.into_vec())
}
