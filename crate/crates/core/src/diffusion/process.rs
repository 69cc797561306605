//! Forward noising, the noise-prediction objective and reverse sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::predictor::{EpsilonModel, NoisePredictor};
use super::schedule::{BlendNoise, DiffusionSchedule};
use crate::error::{shape_err, Error, Result};
use crate::nn::{Gradients, Matrix};
use crate::rng::normal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Ratio between the state-noise std and the action-noise std at the same step.
    pub state_noise_ratio: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub ema_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            state_noise_ratio: 0.1,
            batch_size: 64,
            epochs: 2000,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            ema_decay: crate::nn::DEFAULT_EMA_DECAY,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.state_noise_ratio >= 0.0) {
            return Err(Error::Config("state noise ratio must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(Error::Config("EMA decay must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Closed-form marginal `x_k = √ᾱ_k·x0 + √(1−ᾱ_k)·noise`; `k = 0` returns `x0`.
pub fn forward_diffuse(
    schedule: &DiffusionSchedule,
    x0: &[f64],
    k: usize,
    noise: &[f64],
) -> Result<Vec<f64>> {
    diffuse_with(schedule, x0, k, noise, BlendNoise::Scaled)
}

/// Like [`forward_diffuse`], with an explicit choice of signal scaling.
pub fn diffuse_with(
    schedule: &DiffusionSchedule,
    x0: &[f64],
    k: usize,
    noise: &[f64],
    mode: BlendNoise,
) -> Result<Vec<f64>> {
    schedule.check_step(k)?;
    if x0.len() != noise.len() {
        return Err(shape_err("signal and noise lengths differ"));
    }
    if k == 0 {
        return Ok(x0.to_vec());
    }
    let signal = match mode {
        BlendNoise::Scaled => schedule.alpha_bar(k).sqrt(),
        BlendNoise::Additive => 1.0,
    };
    let spread = schedule.noise_std(k);
    Ok(x0
        .iter()
        .zip(noise)
        .map(|(x, e)| signal * x + spread * e)
        .collect())
}

/// A training batch pushed through the forward process.
#[derive(Debug, Clone)]
pub struct NoisyBatch {
    pub noisy_actions: Matrix,
    /// States as seen by the network (possibly perturbed).
    pub states: Matrix,
    pub steps: Vec<usize>,
    /// The unit-variance noise the network must recover.
    pub noise: Matrix,
}

/// Samples `k ~ U{1..K}`, action noise and state noise for every row.
///
/// Per row the draws are, in order: `k`, the action noise, then the state
/// noise (skipped entirely when `state_noise_ratio == 0`).
pub fn make_noisy_batch<R: Rng + ?Sized>(
    schedule: &DiffusionSchedule,
    states: &Matrix,
    actions: &Matrix,
    state_noise_ratio: f64,
    rng: &mut R,
) -> Result<NoisyBatch> {
    let n = actions.rows();
    if n == 0 {
        return Err(Error::Empty("training batch"));
    }
    if states.rows() != n {
        return Err(shape_err("states and actions differ in batch size"));
    }
    let (adim, sdim) = (actions.cols(), states.cols());
    let mut noisy_actions = Matrix::zeros(n, adim);
    let mut noisy_states = states.clone();
    let mut noise = Matrix::zeros(n, adim);
    let mut steps = Vec::with_capacity(n);
    for i in 0..n {
        let k = rng.random_range(1..=schedule.steps());
        steps.push(k);
        let signal = schedule.alpha_bar(k).sqrt();
        let spread = schedule.noise_std(k);
        let eps = noise.row_mut(i);
        for e in eps.iter_mut() {
            *e = normal(rng);
        }
        for j in 0..adim {
            noisy_actions[(i, j)] = signal * actions[(i, j)] + spread * noise[(i, j)];
        }
        if state_noise_ratio > 0.0 {
            let state_std = state_noise_ratio * spread;
            for j in 0..sdim {
                noisy_states[(i, j)] += state_std * normal(rng);
            }
        }
    }
    Ok(NoisyBatch {
        noisy_actions,
        states: noisy_states,
        steps,
        noise,
    })
}

/// Mean squared error over all entries and its gradient with respect to
/// `predicted`.
pub fn noise_mse(predicted: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if predicted.rows() != target.rows() || predicted.cols() != target.cols() {
        return Err(shape_err("prediction and target shapes differ"));
    }
    let count = predicted.as_slice().len();
    if count == 0 {
        return Err(Error::Empty("loss input"));
    }
    let scale = 1.0 / count as f64;
    let mut grad = Matrix::zeros(predicted.rows(), predicted.cols());
    let mut loss = 0.0;
    for ((g, p), t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(predicted.as_slice())
        .zip(target.as_slice())
    {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d * scale;
    }
    Ok((loss * scale, grad))
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub grads: Gradients,
}

/// Loss and parameter gradients of a predictor on an already-noised batch.
pub fn batch_loss(
    predictor: &NoisePredictor,
    schedule: &DiffusionSchedule,
    batch: &NoisyBatch,
) -> Result<LossOutput> {
    let inputs = predictor.assemble_inputs(
        &batch.noisy_actions,
        &batch.states,
        &batch.steps,
        schedule.steps(),
    )?;
    let (predicted, tape) = predictor.net.forward_tape(&inputs)?;
    let (loss, out_grad) = noise_mse(&predicted, &batch.noise)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("denoising loss is {loss}")));
    }
    let (grads, _) = predictor.net.backward(&tape, &out_grad)?;
    Ok(LossOutput { loss, grads })
}

/// Noise-prediction objective on `(state, action)` rows: noise the batch,
/// predict, and return the mean squared error with its gradients.
pub fn ddpm_loss<R: Rng + ?Sized>(
    predictor: &NoisePredictor,
    schedule: &DiffusionSchedule,
    states: &Matrix,
    actions: &Matrix,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<LossOutput> {
    let batch = make_noisy_batch(schedule, states, actions, cfg.state_noise_ratio, rng)?;
    batch_loss(predictor, schedule, &batch)
}

/// Runs the reverse chain for every row from its own start step down to 0.
///
/// Rows use their own generator from `rngs`, so a row's result does not
/// depend on which other rows share the batch. A row starting at step `k`
/// costs exactly `k` noise predictions.
pub fn denoise_batch<E: EpsilonModel + ?Sized, R: Rng>(
    model: &E,
    schedule: &DiffusionSchedule,
    start: &Matrix,
    states: &Matrix,
    start_steps: &[usize],
    rngs: &mut [R],
) -> Result<Matrix> {
    let n = start.rows();
    if states.rows() != n || start_steps.len() != n || rngs.len() != n {
        return Err(shape_err("denoise batch parts disagree in length"));
    }
    if start.cols() != model.action_dim() || states.cols() != model.state_dim() {
        return Err(shape_err("denoise batch widths do not match the model"));
    }
    for &k in start_steps {
        schedule.check_step(k)?;
    }
    let total = schedule.steps();
    let mut x = start.clone();
    let top = start_steps.iter().copied().max().unwrap_or(0);
    for k in (1..=top).rev() {
        let active: Vec<usize> = (0..n).filter(|&i| start_steps[i] >= k).collect();
        let xa = x.select_rows(&active);
        let sa = states.select_rows(&active);
        let eps = model.predict_noise(&xa, &sa, &vec![k; active.len()], total)?;
        let inv_sqrt_alpha = 1.0 / schedule.alpha(k).sqrt();
        let eps_coef = schedule.beta(k) / schedule.noise_std(k);
        let sigma = schedule.sigma(k);
        for (r, &i) in active.iter().enumerate() {
            let rng = &mut rngs[i];
            let row = x.row_mut(i);
            for (j, v) in row.iter_mut().enumerate() {
                let mean = inv_sqrt_alpha * (*v - eps_coef * eps[(r, j)]);
                *v = if k > 1 { mean + sigma * normal(rng) } else { mean };
            }
        }
    }
    if !x.is_finite() {
        return Err(Error::Numeric("reverse chain produced a non-finite action".into()));
    }
    Ok(x)
}

/// Denoises a single action from step `k` to 0, conditioned on `state`.
pub fn denoise_from<E: EpsilonModel + ?Sized, R: Rng>(
    model: &E,
    schedule: &DiffusionSchedule,
    noisy_action: &[f64],
    state: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    schedule.check_step(k)?;
    let out = denoise_batch(
        model,
        schedule,
        &Matrix::row_vector(noisy_action),
        &Matrix::row_vector(state),
        &[k],
        std::slice::from_mut(rng),
    )?;
    Ok(out.into_vec())
}

/// Draws `a_K ~ N(0, I)` and denoises it fully.
pub fn sample_full<E: EpsilonModel + ?Sized, R: Rng>(
    model: &E,
    schedule: &DiffusionSchedule,
    state: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let start: Vec<f64> = (0..model.action_dim()).map(|_| normal(rng)).collect();
    denoise_from(model, schedule, &start, state, schedule.steps(), rng)
}
