//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, MlpParams};
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

impl AdamWConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Moment accumulators for every parameter, flattened in
/// [`MlpParams::blocks`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(params: &MlpParams, config: AdamWConfig) -> Self {
        let n = params.param_count();
        Self {
            config,
            step: 0,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
        }
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.first_moment, &self.second_moment)
    }

    pub fn from_parts(
        config: AdamWConfig,
        step: u64,
        first_moment: Vec<f64>,
        second_moment: Vec<f64>,
    ) -> Result<Self> {
        if first_moment.len() != second_moment.len() {
            return Err(shape_err("moment vectors differ in length"));
        }
        Ok(Self {
            config,
            step,
            first_moment,
            second_moment,
        })
    }
}

/// One AdamW update. Non-finite gradients leave both `params` and `opt`
/// untouched.
pub fn adamw_step(params: &mut MlpParams, grads: &Gradients, opt: &mut OptimizerState) -> Result<()> {
    if !params.same_shape(grads) || opt.first_moment.len() != params.param_count() {
        return Err(shape_err("gradient or optimizer state does not match parameters"));
    }
    let cfg = opt.config;
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::Config(format!(
            "learning rate must be positive, got {}",
            cfg.learning_rate
        )));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("gradient contains NaN or infinity".into()));
    }

    opt.step += 1;
    let t = opt.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    let decay = cfg.learning_rate * cfg.weight_decay;

    let mut offset = 0;
    for (w_block, g_block) in params.blocks_mut().zip(grads.blocks()) {
        let m_block = &mut opt.first_moment[offset..offset + w_block.len()];
        let v_block = &mut opt.second_moment[offset..offset + w_block.len()];
        for (((w, &g), m), v) in w_block.iter_mut().zip(g_block).zip(m_block).zip(v_block) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *w -= decay * *w + cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        offset += w_block.len();
    }
    Ok(())
}
