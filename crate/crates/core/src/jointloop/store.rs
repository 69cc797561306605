//! On-disk trajectory store and deterministic replay.
//!
//! Each trajectory is a JSON-lines file: a header line followed by one record
//! per step. `manifest.json` lists the files of a dataset in order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::trajectory::{CollectionMode, Trajectory, Transition};
use crate::envs::{reset, step, Task};
use crate::error::{Error, Result};

pub const STORE_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
/// Default state tolerance of [`replay`].
pub const REPLAY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub task: Task,
    pub seed: u64,
    pub mode: CollectionMode,
    pub success: bool,
    pub horizon: usize,
    pub format_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub state: Vec<f64>,
    pub human_action: Vec<f64>,
    pub shared_action: Vec<f64>,
    pub gamma: f64,
    pub alignment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub seed: u64,
    pub mode: CollectionMode,
    pub success: bool,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub entries: Vec<ManifestEntry>,
}

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    let header = TrajectoryHeader {
        task: traj.task,
        seed: traj.seed,
        mode: traj.mode,
        success: traj.success,
        horizon: traj.horizon(),
        format_version: STORE_FORMAT_VERSION,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for (t, tr) in traj.transitions.iter().enumerate() {
        let rec = StepRecord {
            t,
            state: tr.state.clone(),
            human_action: tr.human_action.clone(),
            shared_action: tr.shared_action.clone(),
            gamma: tr.gamma,
            alignment: tr.alignment,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines.next().ok_or(Error::Empty("trajectory file"))??;
    let header: TrajectoryHeader = serde_json::from_str(&first)?;
    if header.format_version != STORE_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found: header.format_version,
            expected: STORE_FORMAT_VERSION,
        });
    }
    let mut transitions = Vec::with_capacity(header.horizon);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StepRecord = serde_json::from_str(&line)?;
        if rec.t != transitions.len() {
            return Err(Error::Contract(format!(
                "record {} out of order (expected t = {})",
                rec.t,
                transitions.len()
            )));
        }
        transitions.push(Transition {
            state: rec.state,
            human_action: rec.human_action,
            shared_action: rec.shared_action,
            gamma: rec.gamma,
            alignment: rec.alignment,
        });
    }
    if transitions.len() != header.horizon {
        return Err(Error::Contract(format!(
            "header promises {} records, file has {}",
            header.horizon,
            transitions.len()
        )));
    }
    Ok(Trajectory {
        task: header.task,
        seed: header.seed,
        mode: header.mode,
        success: header.success,
        transitions,
    })
}

/// Writes every trajectory plus a manifest into `dir`.
pub fn save_dataset(dataset: &[Trajectory], dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(dataset.len());
    for (i, traj) in dataset.iter().enumerate() {
        let file = format!("traj_{i:05}.jsonl");
        write_trajectory(traj, &dir.join(&file))?;
        entries.push(ManifestEntry {
            file,
            seed: traj.seed,
            mode: traj.mode,
            success: traj.success,
            horizon: traj.horizon(),
        });
    }
    let manifest = Manifest {
        format_version: STORE_FORMAT_VERSION,
        entries,
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Paths of a stored dataset's trajectories, in manifest order.
pub fn dataset_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.format_version != STORE_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found: manifest.format_version,
            expected: STORE_FORMAT_VERSION,
        });
    }
    Ok(manifest.entries.iter().map(|e| dir.join(&e.file)).collect())
}

pub fn load_dataset(dir: &Path) -> Result<Vec<Trajectory>> {
    dataset_files(dir)?.iter().map(|p| read_trajectory(p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub ticks: usize,
    pub max_deviation: f64,
}

/// Re-simulates the executed actions from the recorded seed and checks every
/// recorded state, and the final success flag, against the simulation.
pub fn replay(traj: &Trajectory, tolerance: f64) -> Result<ReplayReport> {
    let mut state = reset(traj.task, traj.seed);
    let mut max_deviation: f64 = 0.0;
    for (tick, tr) in traj.transitions.iter().enumerate() {
        let deviation = if tr.state.len() == state.values.len() {
            tr.state
                .iter()
                .zip(&state.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        if !(deviation <= tolerance) {
            return Err(Error::ReplayDiverged { tick, deviation });
        }
        max_deviation = max_deviation.max(deviation);
        state = step(&state, &tr.shared_action).map_err(|_| Error::ReplayDiverged {
            tick,
            deviation: f64::INFINITY,
        })?;
    }
    if state.success != traj.success {
        return Err(Error::ReplayDiverged {
            tick: traj.horizon(),
            deviation: 1.0,
        });
    }
    Ok(ReplayReport {
        ticks: traj.horizon(),
        max_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::OperatorProfile;
    use crate::jointloop::{run_episodes, Driver};

    #[test]
    fn round_trip_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let trajs = run_episodes(Task::PickPlace, &OperatorProfile::calibrated(), &Driver::Manual, &[1, 2]).unwrap();
        save_dataset(&trajs, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, trajs);
        for t in &back {
            assert_eq!(replay(t, REPLAY_TOLERANCE).unwrap().max_deviation, 0.0);
        }
    }

    #[test]
    fn corrupted_action_is_caught() {
        let mut traj = run_episodes(Task::PushCube, &OperatorProfile::perfect(), &Driver::Manual, &[5])
            .unwrap()
            .remove(0);
        traj.transitions[3].shared_action = vec![0.0, 0.0];
        match replay(&traj, REPLAY_TOLERANCE) {
            Err(Error::ReplayDiverged { tick, .. }) => assert_eq!(tick, 4),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
