use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a human action is pushed to step `k` before denoising.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendNoise {
    /// `√ᾱ_k·a + √(1−ᾱ_k)·ε`, the marginal the denoiser was trained on.
    #[default]
    Scaled,
    /// `a + √(1−ᾱ_k)·ε`, leaving the action unscaled.
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Steepness of the logistic ramp.
    pub steepness: f64,
    pub blend_noise: BlendNoise,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            beta_min: 1e-4,
            beta_max: 0.1,
            steepness: 6.0,
            blend_noise: BlendNoise::Scaled,
        }
    }
}

/// Noise-level tables for a `K`-step chain. Tables are indexed by step
/// `k ∈ 1..=K`; `alpha_bar(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    config: ScheduleConfig,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn new(config: ScheduleConfig) -> Result<Self> {
        let ScheduleConfig {
            steps,
            beta_min,
            beta_max,
            steepness,
            ..
        } = config;
        if steps == 0 {
            return Err(Error::Config("diffusion needs at least one step".into()));
        }
        if !(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < beta_min < beta_max < 1, got {beta_min}, {beta_max}"
            )));
        }
        if !(steepness.is_finite() && steepness > 0.0) {
            return Err(Error::Config(format!("steepness must be positive, got {steepness}")));
        }

        let logistic = |k: usize| {
            let x = steepness * (2.0 * k as f64 / steps as f64 - 1.0);
            1.0 / (1.0 + (-x).exp())
        };
        let beta: Vec<f64> = if steps == 1 {
            // a single step spans the whole range
            vec![beta_max]
        } else {
            let (lo, hi) = (logistic(1), logistic(steps));
            (1..=steps)
                .map(|k| {
                    if k == 1 {
                        beta_min
                    } else if k == steps {
                        beta_max
                    } else {
                        beta_min + (beta_max - beta_min) * (logistic(k) - lo) / (hi - lo)
                    }
                })
                .collect()
        };
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut running = 1.0;
        for a in &alpha {
            running *= a;
            alpha_bar.push(running);
        }
        // posterior variance of q(x_{k-1} | x_k, x_0)
        let sigma = (0..steps)
            .map(|i| {
                let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
                ((1.0 - prev) / (1.0 - alpha_bar[i]) * beta[i]).sqrt()
            })
            .collect();
        Ok(Self {
            config,
            beta,
            alpha,
            alpha_bar,
            sigma,
        })
    }

    pub fn config(&self) -> &ScheduleConfig {
        &self.config
    }

    /// Number of steps `K`.
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn blend_noise(&self) -> BlendNoise {
        self.config.blend_noise
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.beta[k - 1]
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.alpha[k - 1]
    }

    pub fn alpha_bar(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.alpha_bar[k - 1]
        }
    }

    pub fn sigma(&self, k: usize) -> f64 {
        self.sigma[k - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Standard deviation of the noise component at step `k`, `√(1−ᾱ_k)`.
    pub fn noise_std(&self, k: usize) -> f64 {
        (1.0 - self.alpha_bar(k)).sqrt()
    }

    /// Copy with every reverse-step noise scale set to zero.
    pub fn without_sampling_noise(&self) -> Self {
        let mut s = self.clone();
        s.sigma.iter_mut().for_each(|v| *v = 0.0);
        s
    }

    pub fn check_step(&self, k: usize) -> Result<()> {
        if k > self.steps() {
            return Err(Error::StepOutOfRange {
                step: k,
                max: self.steps(),
            });
        }
        Ok(())
    }
}

/// Builds the default logistic schedule for `steps`, `beta_min`, `beta_max`.
pub fn build_schedule(steps: usize, beta_min: f64, beta_max: f64) -> Result<DiffusionSchedule> {
    DiffusionSchedule::new(ScheduleConfig {
        steps,
        beta_min,
        beta_max,
        ..ScheduleConfig::default()
    })
}
