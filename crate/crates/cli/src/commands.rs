use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use teleassist::agents::AssistiveAgent;
use teleassist::jointloop::{
    collect_round, compute_metrics, dataset_files, episode_seeds, evaluate, gamma_sweep, parse_rounds,
    read_trajectory, replay, reports_table, run_joint_learning_with, save_dataset, sweep_csv, Driver, GammaPolicy,
    JointConfig, RoundReport, Trajectory, REPLAY_TOLERANCE,
};

use crate::args::*;
use crate::server::{serve, ServeConfig};
use crate::CliError;

struct Globals {
    seed: u64,
    out: PathBuf,
    file: FileConfig,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let g = Globals {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out: cli.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into()),
        file,
    };
    match cli.command {
        Command::Train(a) => train(&g, &a),
        Command::Collect(a) => collect(&g, &a),
        Command::Evaluate(a) => evaluate_cmd(&g, &a),
        Command::Serve(a) => serve_cmd(&g, &a),
        Command::Replay(a) => replay_cmd(&g, &a),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: serde::Serialize>(value: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn train_config(g: &Globals, a: &TrainArgs) -> Result<JointConfig, CliError> {
    let f = &g.file;
    let task = require_task(&a.task, f)?;
    let rounds_text = a.rounds.clone().or_else(|| f.rounds.clone()).unwrap_or_else(|| DEFAULT_ROUNDS.into());
    let rounds = parse_rounds(&rounds_text).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut cfg = JointConfig {
        task,
        operator: a.operator.resolve(f)?,
        rounds,
        seed: g.seed,
        ..JointConfig::default()
    };
    if let Some(e) = a.epochs.or(f.epochs) {
        cfg.agent.train.epochs = e;
    }
    cfg.eval_episodes = a.eval_episodes.or(f.eval_episodes).unwrap_or(cfg.eval_episodes);
    if let Some(text) = a.sweep_gammas.as_ref().or(f.sweep_gammas.as_ref()) {
        cfg.sweep_gammas = parse_gammas(text)?;
    }
    cfg.sweep_episodes = a.sweep_episodes.or(f.sweep_episodes).unwrap_or(cfg.sweep_episodes);
    Ok(cfg)
}

fn train(g: &Globals, a: &TrainArgs) -> Result<(), CliError> {
    let cfg = train_config(g, a)?;
    let out = &g.out;
    let checkpoints = out.join("checkpoints");
    fs::create_dir_all(&checkpoints).with_context(|| format!("creating {}", checkpoints.display()))?;
    write(&out.join("config.json"), to_json(&cfg)?)?;

    let mut hook = |report: &RoundReport, agent: &AssistiveAgent, _: &[Trajectory]| -> teleassist::Result<()> {
        agent.save(&checkpoints.join(format!("round{}.json", report.round)))?;
        if !report.sweep.is_empty() {
            fs::write(out.join(format!("sweep_round{}.csv", report.round)), sweep_csv(&report.sweep))?;
        }
        eprintln!(
            "round {}: {} valid of {} attempts, data {}",
            report.round,
            report.metrics.valid,
            report.metrics.attempts,
            report.dataset.label()
        );
        Ok(())
    };
    let outcome = run_joint_learning_with(&cfg, &mut hook)?;

    outcome.agent.save(&out.join("agent.json"))?;
    save_dataset(&outcome.dataset, &out.join("dataset"))?;
    write(&out.join("reports.json"), to_json(&outcome.reports)?)?;
    let table = reports_table(&outcome.reports);
    write(&out.join("reports.txt"), &table)?;
    print!("{table}");
    if let Some(e) = outcome.autonomy {
        write(&out.join("autonomy.json"), to_json(&e)?)?;
        println!(
            "autonomy: success_rate={} mean_horizon={} episodes={}",
            e.success_rate,
            e.mean_horizon.map_or_else(|| "-".into(), |h| h.to_string()),
            e.episodes
        );
    }
    Ok(())
}

fn load_agent(path: &Path, task: teleassist::envs::Task) -> Result<AssistiveAgent, CliError> {
    AssistiveAgent::load(path, task)
        .with_context(|| format!("loading checkpoint {}", path.display()))
        .map_err(CliError::Failed)
}

fn collect(g: &Globals, a: &CollectArgs) -> Result<(), CliError> {
    let f = &g.file;
    let task = require_task(&a.task, f)?;
    let profile = a.operator.resolve(f)?;
    let checkpoint = a.checkpoint.clone().or_else(|| f.checkpoint.clone());
    let gamma = match a.gamma.as_ref().or(f.gamma.as_ref()) {
        Some(text) => parse_gamma(text)?,
        None if checkpoint.is_some() => GammaPolicy::Fixed(0.5),
        None => GammaPolicy::Fixed(0.0),
    };
    let n = a.episodes.or(f.episodes).unwrap_or(10);
    let manual = gamma == GammaPolicy::Fixed(0.0);
    if !manual && checkpoint.is_none() {
        return Err(CliError::Usage("--gamma above 0 needs --checkpoint".into()));
    }
    let agent = match &checkpoint {
        Some(p) => Some(load_agent(p, task)?),
        None => None,
    };
    let driver = match &agent {
        Some(agent) if !manual => Driver::Assisted {
            agent,
            ratio: gamma.ratio()?,
        },
        _ => Driver::Manual,
    };
    let collection = collect_round(task, &profile, &driver, n, g.seed)?;
    let metrics = compute_metrics(&collection.attempts)?;
    fs::create_dir_all(&g.out).with_context(|| format!("creating {}", g.out.display()))?;
    save_dataset(&collection.trajectories, &g.out.join("dataset"))?;
    write(&g.out.join("metrics.json"), to_json(&metrics)?)?;
    println!(
        "collected {} valid of {} attempts (success rate {:.4}, {:.1} demos/h)",
        metrics.valid, metrics.attempts, metrics.success_rate, metrics.collection_speed
    );
    Ok(())
}

fn evaluate_cmd(g: &Globals, a: &EvaluateArgs) -> Result<(), CliError> {
    let f = &g.file;
    let task = require_task(&a.task, f)?;
    let checkpoint = a
        .checkpoint
        .clone()
        .or_else(|| f.checkpoint.clone())
        .ok_or_else(|| CliError::Usage("--checkpoint is required".into()))?;
    let gammas = parse_gammas(a.gammas.as_deref().or(f.gammas.as_deref()).unwrap_or(DEFAULT_GAMMAS))?;
    let episodes = a.episodes.or(f.episodes).unwrap_or(50);
    let profile = a.operator.resolve(f)?;
    let agent = load_agent(&checkpoint, task)?;

    let points = gamma_sweep(&agent, &profile, &gammas, episodes, g.seed)?;
    let csv = sweep_csv(&points);
    let seeds = episode_seeds(g.seed, 0..episodes);
    let autonomy = evaluate(task, &profile, &Driver::Autonomous(&agent), &seeds)?;
    fs::create_dir_all(&g.out).with_context(|| format!("creating {}", g.out.display()))?;
    write(&g.out.join("sweep.csv"), &csv)?;
    write(&g.out.join("autonomy.json"), to_json(&autonomy)?)?;
    print!("{csv}");
    println!(
        "autonomy: success_rate={} mean_horizon={} episodes={}",
        autonomy.success_rate,
        autonomy.mean_horizon.map_or_else(|| "-".into(), |h| h.to_string()),
        autonomy.episodes
    );
    Ok(())
}

fn serve_cmd(g: &Globals, a: &ServeArgs) -> Result<(), CliError> {
    let f = &g.file;
    let task = require_task(&a.task, f)?;
    let gamma = parse_gamma(a.gamma.as_deref().or(f.gamma.as_deref()).unwrap_or("0.5"))?;
    let host = a.host.clone().or_else(|| f.host.clone()).unwrap_or_else(|| "127.0.0.1".into());
    let port = a.port.or(f.port).unwrap_or(DEFAULT_PORT);
    let tick_ms = a.tick_ms.or(f.tick_ms).unwrap_or(100);
    if tick_ms == 0 {
        return Err(CliError::Usage("--tick-ms must be positive".into()));
    }
    let agent = match a.checkpoint.as_ref().or(f.checkpoint.as_ref()) {
        Some(p) => Some(load_agent(p, task)?),
        None => None,
    };
    let cfg = ServeConfig {
        task,
        seed: g.seed,
        gamma,
        store: g.out.join("episodes"),
        tick: Duration::from_millis(tick_ms),
    };
    let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        eprintln!("serving {task} on ws://{}/ws", listener.local_addr()?);
        serve(listener, cfg, agent).await.context("service stopped")
    })?;
    Ok(())
}

fn replay_cmd(g: &Globals, a: &ReplayArgs) -> Result<(), CliError> {
    let f = &g.file;
    let tolerance = a.tolerance.or(f.tolerance).unwrap_or(REPLAY_TOLERANCE);
    let single = a.trajectory.clone().or_else(|| f.trajectory.clone());
    let dataset = a.dataset.clone().or_else(|| f.dataset.clone());
    match (single, dataset) {
        (Some(path), None) => {
            let traj = read_trajectory(&path).with_context(|| format!("reading {}", path.display()))?;
            println!("tick gamma alignment");
            for (t, tr) in traj.transitions.iter().enumerate() {
                println!("{t} {} {}", tr.gamma, tr.alignment);
            }
            let r = replay(&traj, tolerance)?;
            println!("replay ok: {} ticks, max deviation {:e}", r.ticks, r.max_deviation);
            Ok(())
        }
        (None, Some(dir)) => {
            let files = dataset_files(&dir).with_context(|| format!("reading manifest in {}", dir.display()))?;
            let mut failed = 0;
            for path in &files {
                let outcome = read_trajectory(path).and_then(|t| replay(&t, tolerance));
                match outcome {
                    Ok(r) => println!("{}: ok ({} ticks)", path.display(), r.ticks),
                    Err(e) => {
                        failed += 1;
                        println!("{}: {e}", path.display());
                    }
                }
            }
            println!("{}/{} replayed", files.len() - failed, files.len());
            if failed > 0 {
                return Err(CliError::Failed(anyhow::anyhow!("{failed} trajectories failed to replay")));
            }
            Ok(())
        }
        _ => Err(CliError::Usage("give exactly one of --trajectory or --dataset".into())),
    }
}
