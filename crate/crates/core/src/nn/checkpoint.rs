//! Lossless JSON snapshots of a network, its EMA shadow and optimizer state.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ema::EmaState;
use super::mlp::{MlpParams, MlpSpec};
use super::optim::{AdamWConfig, OptimizerState};
use crate::error::{Error, Result};

pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSnapshot {
    pub config: AdamWConfig,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaSnapshot {
    pub decay: f64,
    pub updates: u64,
    pub shadow: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCheckpoint {
    pub format_version: u32,
    pub spec: MlpSpec,
    pub params: Vec<f64>,
    pub ema: Option<EmaSnapshot>,
    pub optimizer: Option<OptimizerSnapshot>,
}

impl NetworkCheckpoint {
    pub fn capture(
        live: &MlpParams,
        ema: Option<&EmaState>,
        optimizer: Option<&OptimizerState>,
    ) -> Self {
        Self {
            format_version: NETWORK_FORMAT_VERSION,
            spec: live.spec().clone(),
            params: live.to_flat(),
            ema: ema.map(|e| EmaSnapshot {
                decay: e.decay,
                updates: e.updates,
                shadow: e.shadow.to_flat(),
            }),
            optimizer: optimizer.map(|o| {
                let (m, v) = o.moments();
                OptimizerSnapshot {
                    config: o.config,
                    step: o.step,
                    first_moment: m.to_vec(),
                    second_moment: v.to_vec(),
                }
            }),
        }
    }

    pub fn check_version(&self) -> Result<()> {
        if self.format_version != NETWORK_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: self.format_version,
                expected: NETWORK_FORMAT_VERSION,
            });
        }
        Ok(())
    }

    pub fn live(&self) -> Result<MlpParams> {
        self.check_version()?;
        MlpParams::from_flat(self.spec.clone(), &self.params)
    }

    pub fn ema_state(&self) -> Result<Option<EmaState>> {
        self.ema
            .as_ref()
            .map(|e| {
                Ok(EmaState {
                    shadow: MlpParams::from_flat(self.spec.clone(), &e.shadow)?,
                    decay: e.decay,
                    updates: e.updates,
                })
            })
            .transpose()
    }

    pub fn optimizer_state(&self) -> Result<Option<OptimizerState>> {
        self.optimizer
            .as_ref()
            .map(|o| {
                OptimizerState::from_parts(
                    o.config,
                    o.step,
                    o.first_moment.clone(),
                    o.second_moment.clone(),
                )
            })
            .transpose()
    }
}

/// Writes any serializable checkpoint as pretty JSON.
pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let text = serde_json::to_string(value)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
