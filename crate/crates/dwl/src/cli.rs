//! Argument parsing and the on-disk layout of each subcommand's outputs.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dwl_core::gait::QuinticConstraints;
use dwl_core::profiles::RunConfig;

use crate::checkpoint::Checkpoint;
use crate::commands;
use crate::config;
use crate::error::{CliError, Result};
use crate::manifest::Manifest;
use crate::records;

#[derive(Debug, Parser)]
#[command(name = "dwl", version, about = "Denoising world-model training for legged locomotion")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Built-in profile: paper, desk or smoke.
    #[arg(long, global = true, default_value = "smoke")]
    pub profile: String,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "dwl-out")]
    pub out: PathBuf,
    /// Rollout worker threads; 1 is the reproducibility reference.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Dotted config override, e.g. `hyper.learning_rate=3e-4`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy; writes metrics.csv, checkpoint.bin and config.toml.
    Train,
    /// Success rate and tracking error per terrain.
    Eval(EvalArgs),
    /// Decoder state-estimation error against ground truth.
    Estimate(EstimateArgs),
    /// Sample the swing-foot height polynomial.
    #[command(allow_negative_numbers = true)]
    Traj(TrajArgs),
    /// Print sampled domain-randomization draws for auditing.
    RandomizeCheck(RandomizeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Trained checkpoint; without one a freshly initialized policy is evaluated.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Terrain name (flat, slope, stairs, irregular). Repeatable; defaults to the profile's list.
    #[arg(long = "terrain")]
    pub terrains: Vec<String>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Push force in newtons; 0 disables pushes.
    #[arg(long)]
    pub push_force: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub episodes: usize,
    /// Steps per episode; defaults to the evaluation episode length.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Sample actions from the policy rather than following its mean.
    #[arg(long)]
    pub stochastic: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrajArgs {
    #[arg(long, default_value_t = QuinticConstraints::default().h0)]
    pub h0: f64,
    #[arg(long, default_value_t = QuinticConstraints::default().v0)]
    pub v0: f64,
    #[arg(long, default_value_t = QuinticConstraints::default().acc0)]
    pub acc0: f64,
    #[arg(long, default_value_t = QuinticConstraints::default().h_max)]
    pub h_max: f64,
    #[arg(long, default_value_t = QuinticConstraints::default().h_swing)]
    pub h_swing: f64,
    #[arg(long, default_value_t = QuinticConstraints::default().v_swing)]
    pub v_swing: f64,
    /// Swing duration in seconds.
    #[arg(long, default_value_t = QuinticConstraints::default().duration)]
    pub duration: f64,
    /// Samples per second; both endpoints are always included.
    #[arg(long, default_value_t = 100.0)]
    pub rate: f64,
}

#[derive(Debug, Clone, Args)]
pub struct RandomizeArgs {
    #[arg(short, long, default_value_t = 10)]
    pub n: usize,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code; help and version print and return 0.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    if g.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    match &cli.command {
        Command::Train => train(g),
        Command::Eval(a) => eval(g, a),
        Command::Estimate(a) => estimate(g, a),
        Command::Traj(a) => traj(g, a),
        Command::RandomizeCheck(a) => randomize(g, a),
    }
}

fn manifest(g: &GlobalArgs, command: &str, cfg: &RunConfig, outputs: &[&str], status: &str) -> Result<Manifest> {
    Ok(Manifest {
        command: command.into(),
        profile: cfg.profile.clone(),
        seed: g.seed,
        config_hash: config::config_hash(cfg)?,
        workers: g.workers,
        overrides: g.overrides.clone(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
        version: env!("CARGO_PKG_VERSION").into(),
        status: status.into(),
    })
}

fn write_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let path = dir.join("config.toml");
    fs::write(&path, config::to_toml(cfg)?).map_err(|e| CliError::io(&path, e))
}

fn train(g: &GlobalArgs) -> Result<()> {
    let cfg = config::resolve(&g.profile, &g.overrides)?;
    records::create_dir(&g.out)?;
    write_config(&g.out, &cfg)?;
    let outputs = ["config.toml", "metrics.csv", "checkpoint.bin"];
    manifest(g, "train", &cfg, &outputs, "running")?.write(&g.out)?;

    let metrics_path = g.out.join("metrics.csv");
    let mut w = records::writer(&metrics_path)?;
    let mut last = None;
    let result = commands::train(&cfg, g.seed, g.workers, |m| {
        w.serialize(m)?;
        w.flush().map_err(|e| CliError::io(&metrics_path, e))?;
        if m.update % 10 == 0 || m.update == cfg.updates {
            eprintln!(
                "update {:>5}  return {:>9.2}  fall {:.2}  recon {:.4}  loss {:.4}",
                m.update, m.mean_return, m.fall_rate, m.recon_mse, m.total_loss
            );
        }
        last = Some(m.clone());
        Ok(())
    });
    let agent = match result {
        Ok(a) => a,
        Err(e) => {
            manifest(g, "train", &cfg, &outputs[..2], "diverged")?.write(&g.out)?;
            return Err(e);
        }
    };
    if cfg.updates == 0 {
        // Header for an empty log.
        records::write_rows::<dwl_core::dwl::UpdateMetrics>(&metrics_path, &[])?;
    }
    Checkpoint::from_agent(&cfg, g.seed, &agent).save(&g.out.join("checkpoint.bin"))?;
    manifest(g, "train", &cfg, &outputs, "ok")?.write(&g.out)?;
    if let Some(m) = last {
        println!("trained {} updates: mean return {:.3}, fall rate {:.3}", cfg.updates, m.mean_return, m.fall_rate);
    }
    Ok(())
}

/// Config and agent for commands that read a checkpoint. Overrides apply on
/// top of the checkpoint's stored config.
fn load_agent(g: &GlobalArgs, checkpoint: Option<&Path>) -> Result<(RunConfig, dwl_core::dwl::Agent)> {
    match checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let mut cfg = ck.config.clone();
            for o in &g.overrides {
                cfg = config::apply_override(&cfg, o)?;
            }
            let agent = ck.restore(&cfg).map_err(|e| CliError::Checkpoint {
                path: path.to_path_buf(),
                reason: format!("does not match the configured architecture: {e}"),
            })?;
            Ok((cfg, agent))
        }
        None => {
            let cfg = config::resolve(&g.profile, &g.overrides)?;
            let agent = cfg.build_agent(g.seed)?;
            Ok((cfg, agent))
        }
    }
}

fn eval(g: &GlobalArgs, a: &EvalArgs) -> Result<()> {
    let (cfg, agent) = load_agent(g, a.checkpoint.as_deref())?;
    let terrains = if a.terrains.is_empty() {
        cfg.eval.terrains.clone()
    } else {
        a.terrains.iter().map(|t| commands::terrain_by_name(t, g.seed)).collect::<Result<_>>()?
    };
    let episodes = a.episodes.unwrap_or(cfg.eval.episodes);
    let push = a.push_force.unwrap_or(cfg.eval.push_force);
    if !(push >= 0.0) {
        return Err(CliError::Usage("--push-force must be non-negative".into()));
    }
    records::create_dir(&g.out)?;
    let replay_path = g.out.join("replay.csv");
    let mut replay = records::writer(&replay_path)?;
    replay.write_record(commands::replay_header(cfg.env.joint_count))?;
    let reports = commands::evaluate_terrains(&cfg, &agent, g.seed, episodes, &terrains, push, Some(&mut replay))?;
    replay.flush().map_err(|e| CliError::io(&replay_path, e))?;
    records::write_rows(&g.out.join("eval_report.csv"), &reports)?;
    manifest(g, "eval", &cfg, &["eval_report.csv", "replay.csv"], "ok")?.write(&g.out)?;
    for r in &reports {
        println!(
            "{:<10} episodes {:>3}  success {:.3}  tracking error {:.4}",
            r.terrain, r.episodes, r.success_rate, r.mean_tracking_error
        );
    }
    Ok(())
}

fn estimate(g: &GlobalArgs, a: &EstimateArgs) -> Result<()> {
    let (cfg, agent) = load_agent(g, a.checkpoint.as_deref())?;
    let steps = a.steps.unwrap_or(cfg.eval.episode_length);
    let (reports, recs) = commands::estimate(&cfg, &agent, g.seed, a.episodes, steps, a.stochastic)?;
    records::create_dir(&g.out)?;
    records::write_rows(&g.out.join("estimate_report.csv"), &reports)?;
    commands::estimate_series(&cfg, &recs).write(&g.out.join("estimate_series.csv"))?;
    manifest(g, "estimate", &cfg, &["estimate_report.csv", "estimate_series.csv"], "ok")?.write(&g.out)?;
    for r in &reports {
        println!("{:<17} mse {:.5}  constant {:.5}  ratio {:.3}", r.channel, r.mse, r.constant_mse, r.ratio);
    }
    Ok(())
}

fn traj(g: &GlobalArgs, a: &TrajArgs) -> Result<()> {
    let cfg = config::resolve(&g.profile, &g.overrides)?;
    let c = QuinticConstraints {
        h0: a.h0,
        v0: a.v0,
        acc0: a.acc0,
        h_max: a.h_max,
        h_swing: a.h_swing,
        v_swing: a.v_swing,
        duration: a.duration,
    };
    if !(a.rate > 0.0) || !a.rate.is_finite() {
        return Err(CliError::Usage("--rate must be positive".into()));
    }
    let samples = (a.duration * a.rate).round().max(1.0) as usize + 1;
    let rows = commands::trajectory(&c, samples)?;
    records::create_dir(&g.out)?;
    records::write_rows(&g.out.join("trajectory.csv"), &rows)?;
    manifest(g, "traj", &cfg, &["trajectory.csv"], "ok")?.write(&g.out)?;
    println!("wrote {} samples over [0, {}]", rows.len(), a.duration);
    Ok(())
}

fn randomize(g: &GlobalArgs, a: &RandomizeArgs) -> Result<()> {
    let cfg = config::resolve(&g.profile, &g.overrides)?;
    let table = commands::randomize(&cfg.env.noise, cfg.env.joint_count, a.n, g.seed)?;
    records::create_dir(&g.out)?;
    table.write(&g.out.join("randomize.csv"))?;
    manifest(g, "randomize-check", &cfg, &["randomize.csv"], "ok")?.write(&g.out)?;
    println!("wrote {} rows", table.rows.len());
    Ok(())
}
