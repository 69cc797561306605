use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::trajectory::{DatasetSizes, Trajectory};
use super::GammaPolicy;
use crate::error::{Error, Result};

/// Control rate of the simulated wall clock.
pub const CONTROL_HZ: f64 = 10.0;

/// Outcome of one collection attempt, kept even when the episode is discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub seed: u64,
    pub valid: bool,
    pub horizon: usize,
}

impl From<&Trajectory> for Attempt {
    fn from(t: &Trajectory) -> Self {
        Self {
            seed: t.seed,
            valid: t.is_valid(),
            horizon: t.horizon(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub attempts: usize,
    pub valid: usize,
    pub success_rate: f64,
    /// Mean steps of the valid episodes; absent when none were valid.
    pub mean_horizon: Option<f64>,
    /// Valid demonstrations per simulated hour, charging failed attempts'
    /// steps to the valid ones.
    pub collection_speed: f64,
}

pub fn compute_metrics(attempts: &[Attempt]) -> Result<Metrics> {
    if attempts.is_empty() {
        return Err(Error::Empty("attempts"));
    }
    let valid: Vec<&Attempt> = attempts.iter().filter(|a| a.valid).collect();
    let wall: usize = attempts.iter().map(|a| a.horizon).sum();
    let n = valid.len();
    let mean_horizon = (n > 0).then(|| valid.iter().map(|a| a.horizon as f64).sum::<f64>() / n as f64);
    let collection_speed = if n == 0 || wall == 0 {
        0.0
    } else {
        let seconds_per_sample = wall as f64 / n as f64 / CONTROL_HZ;
        3600.0 / seconds_per_sample
    };
    Ok(Metrics {
        attempts: attempts.len(),
        valid: n,
        success_rate: n as f64 / attempts.len() as f64,
        mean_horizon,
        collection_speed,
    })
}

/// `(gamma, success rate, mean horizon)` for one point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub gamma: f64,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub gamma: GammaPolicy,
    pub n_target: usize,
    /// Dataset composition after this round's collection.
    pub dataset: DatasetSizes,
    pub metrics: Metrics,
    pub mean_alignment: Option<f64>,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub sweep: Vec<SweepPoint>,
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

/// Plain-text table with one row per round.
pub fn reports_table(reports: &[RoundReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:<9} {:<16} {:>9} {:>12} {:>9} {:>13}",
        "round", "gamma", "data", "attempts", "success(%)", "horizon", "speed(/h)"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<6} {:<9} {:<16} {:>9} {:>12.2} {:>9} {:>13.1}",
            r.round,
            r.gamma.to_string(),
            r.dataset.label(),
            r.metrics.attempts,
            100.0 * r.metrics.success_rate,
            opt(r.metrics.mean_horizon, 1),
            r.metrics.collection_speed
        );
    }
    out
}

/// `gamma,episodes,success_rate,mean_horizon` rows.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("gamma,episodes,success_rate,mean_horizon\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.gamma,
            p.episodes,
            p.success_rate,
            p.mean_horizon.map_or_else(String::new, |h| h.to_string())
        );
    }
    out
}
