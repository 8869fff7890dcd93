//! The work behind each subcommand, usable without the argument parser.

use std::fs::File;

use dwl_core::dwl::{
    channel_mse, constant_predictor_mse, estimate_channels, estimate_state, evaluate, Agent, EstimateRecord, Trainer,
    UpdateMetrics,
};
use dwl_core::env::TaskConfig;
use dwl_core::gait::{solve_quintic, QuinticConstraints};
use dwl_core::noise::{sample_dynamics, NoiseConfig, NoiseSpec};
use dwl_core::obs::{Channel, Layout};
use dwl_core::profiles::RunConfig;
use dwl_core::rng::RngStream;
use dwl_core::sim::TerrainProfile;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::runner::ThreadedRunner;

/// Trains for `cfg.updates` updates, calling `on_update` after each one.
pub fn train(
    cfg: &RunConfig,
    seed: u64,
    workers: usize,
    mut on_update: impl FnMut(&UpdateMetrics) -> Result<()>,
) -> Result<Agent> {
    cfg.validate()?;
    let agent = cfg.build_agent(seed)?;
    let envs = cfg.build_envs(seed)?;
    let mut trainer = Trainer::new(agent, cfg.hyper.clone(), envs, seed)?;
    let mut runner = ThreadedRunner::new(workers);
    let start = std::time::Instant::now();
    for _ in 0..cfg.updates {
        let mut m = trainer.update(&mut runner)?;
        m.wall_time = start.elapsed().as_secs_f64();
        on_update(&m)?;
    }
    Ok(trainer.into_agent())
}

/// Parses a terrain name into the profile used for evaluation.
pub fn terrain_by_name(name: &str, seed: u64) -> Result<TerrainProfile> {
    Ok(match name {
        "flat" => TerrainProfile::Flat,
        "slope" => TerrainProfile::slope(0.1),
        "stairs" => TerrainProfile::stairs(0.04, 0.3),
        "irregular" => TerrainProfile::irregular(0.03, seed),
        other => {
            return Err(CliError::Usage(format!(
                "unknown terrain `{other}` (expected flat, slope, stairs or irregular)"
            )))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TerrainReport {
    pub terrain: String,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_tracking_error: f64,
    pub mean_return: f64,
    pub mean_length: f64,
}

fn eval_task(cfg: &RunConfig, push_force: f64) -> TaskConfig {
    let mut task = cfg.task.clone();
    task.episode_length = cfg.eval.episode_length;
    task.push_force = push_force;
    task.push_interval = if push_force > 0.0 {
        if cfg.task.push_interval > 0.0 {
            cfg.task.push_interval
        } else {
            TaskConfig::default().push_interval
        }
    } else {
        0.0
    };
    task
}

/// Replay log columns: `terrain_index, episode, step, time, vx, vx_cmd, vz, pitch, contact_l, contact_r, reward, a_0..`.
pub fn replay_header(joints: usize) -> Vec<String> {
    let mut h: Vec<String> =
        ["terrain_index", "episode", "step", "time", "vx", "vx_cmd", "vz", "pitch", "contact_l", "contact_r", "reward"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    h.extend((0..joints).map(|j| format!("a_{j}")));
    h
}

/// Deterministic (policy-mean) evaluation on each terrain.
pub fn evaluate_terrains(
    cfg: &RunConfig,
    agent: &Agent,
    seed: u64,
    episodes: usize,
    terrains: &[TerrainProfile],
    push_force: f64,
    mut replay: Option<&mut csv::Writer<File>>,
) -> Result<Vec<TerrainReport>> {
    if episodes == 0 {
        return Ok(Vec::new());
    }
    let task = eval_task(cfg, push_force);
    let layout = Layout::state(&cfg.env);
    let range = |c| layout.range(c).ok_or(dwl_core::Error::MissingChannel(c.name()));
    let (vel, cmd, ori, contact) = (
        range(Channel::BaseLinearVelocity)?,
        range(Channel::Commands)?,
        range(Channel::Orientation)?,
        range(Channel::FeetContact)?,
    );
    let dt = cfg.env.control_dt();
    let mut out = Vec::with_capacity(terrains.len());
    for (ti, terrain) in terrains.iter().enumerate() {
        let mut sim = cfg.sim.clone();
        sim.terrain = *terrain;
        let mut env = cfg.build_env_with(&sim, &task, seed, 50_000 + ti as u64)?;
        let mut write_err = None;
        let mut observer = |s: &dwl_core::dwl::EvalStep<'_>| {
            if let Some(w) = replay.as_deref_mut() {
                let st = s.state;
                let mut row = vec![
                    ti as f64,
                    s.episode as f64,
                    s.step as f64,
                    s.step as f64 * dt,
                    st[vel.start],
                    st[cmd.start],
                    st[vel.start + 2],
                    st[ori.start + 1],
                    st[contact.start],
                    st[contact.start + 1],
                    s.reward,
                ];
                row.extend_from_slice(s.action);
                if let Err(e) = w.write_record(row.iter().map(f64::to_string)) {
                    write_err.get_or_insert(e);
                }
            }
        };
        let results = evaluate(agent, env.as_mut(), episodes, None, &mut observer)?;
        if let Some(e) = write_err {
            return Err(e.into());
        }
        let n = results.len();
        let mean = |f: &dyn Fn(&dwl_core::dwl::EpisodeOutcome) -> f64| {
            if n == 0 {
                f64::NAN
            } else {
                results.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let successes = results.iter().filter(|r| r.success).count();
        out.push(TerrainReport {
            terrain: terrain.name().to_string(),
            episodes: n,
            successes,
            success_rate: if n == 0 { f64::NAN } else { successes as f64 / n as f64 },
            mean_tracking_error: mean(&|r| r.tracking_error),
            mean_return: mean(&|r| r.ret),
            mean_length: mean(&|r| r.steps as f64),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelReport {
    pub channel: String,
    pub mse: f64,
    /// MSE of predicting the per-index mean of the truth.
    pub constant_mse: f64,
    /// `mse / constant_mse`; NaN when the channel is constant.
    pub ratio: f64,
}

/// Decoder estimates on fresh environment streams `(seed, 90_000 + k)`.
/// `stochastic` samples actions from the policy (stream `(seed, 95_000 + k)`)
/// instead of following its mean.
pub fn estimate(
    cfg: &RunConfig,
    agent: &Agent,
    seed: u64,
    episodes: usize,
    steps: usize,
    stochastic: bool,
) -> Result<(Vec<ChannelReport>, Vec<EstimateRecord>)> {
    let mut records = Vec::new();
    for k in 0..episodes {
        let mut env = cfg.build_env(seed, 90_000 + k as u64)?;
        let mut rng = RngStream::new(seed, 95_000 + k as u64);
        let rng = if stochastic { Some(&mut rng) } else { None };
        let mut recs = estimate_state(agent, env.as_mut(), 1, steps, rng)?;
        recs.iter_mut().for_each(|r| r.episode = k);
        records.extend(recs);
    }
    let layout = Layout::state(&cfg.env);
    let reports = estimate_channels(&layout)
        .into_iter()
        .map(|(name, r)| {
            let mse = channel_mse(&records, r.clone());
            let constant_mse = constant_predictor_mse(&records, r);
            // A channel that never varies (yaw on the planar robot) has no meaningful ratio.
            let ratio = if constant_mse > 1e-12 { mse / constant_mse } else { f64::NAN };
            ChannelReport { channel: name.to_string(), mse, constant_mse, ratio }
        })
        .collect();
    Ok((reports, records))
}

/// Time series of the estimated channels: truth and prediction side by side.
pub fn estimate_series(cfg: &RunConfig, records: &[EstimateRecord]) -> crate::records::Table {
    let layout = Layout::state(&cfg.env);
    let channels: Vec<_> =
        estimate_channels(&layout).into_iter().filter(|(n, _)| *n != "base_lin_vel").collect();
    let mut header = vec!["episode".to_string(), "step".to_string(), "time".to_string()];
    for (name, r) in &channels {
        for k in 0..r.len() {
            let tag = if r.len() == 1 { name.to_string() } else { format!("{name}_{k}") };
            header.push(format!("{tag}_true"));
            header.push(format!("{tag}_pred"));
        }
    }
    let mut table = crate::records::Table::new(header);
    let dt = cfg.env.control_dt();
    for rec in records {
        let mut row = vec![rec.episode as f64, rec.step as f64, rec.step as f64 * dt];
        for (_, r) in &channels {
            for i in r.clone() {
                row.push(rec.truth[i]);
                row.push(rec.predicted[i]);
            }
        }
        table.rows.push(row);
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajRow {
    pub t: f64,
    pub h: f64,
    pub v: f64,
    pub a: f64,
}

/// `samples` evenly spaced points over `[0, T]` of the swing polynomial.
pub fn trajectory(c: &QuinticConstraints, samples: usize) -> Result<Vec<TrajRow>> {
    if samples < 2 {
        return Err(CliError::Usage("trajectory needs at least 2 samples".into()));
    }
    let coeffs = solve_quintic(c)?;
    Ok((0..samples)
        .map(|k| {
            let t = c.duration * k as f64 / (samples - 1) as f64;
            let (h, v, a) = coeffs.eval(t);
            TrajRow { t, h, v, a }
        })
        .collect())
}

/// Column name and the spec each column of the randomization audit is drawn from.
pub fn randomize_columns(noise: &NoiseConfig, joint_count: usize) -> Vec<(String, &NoiseSpec)> {
    let mut cols: Vec<(String, &NoiseSpec)> = vec![
        ("friction".into(), &noise.friction),
        ("payload".into(), &noise.payload),
        ("motor_strength".into(), &noise.motor_strength),
        ("kp_factor".into(), &noise.pd_factors),
        ("kd_factor".into(), &noise.pd_factors),
        ("system_delay_ms".into(), &noise.system_delay),
    ];
    cols.extend((0..joint_count).map(|j| (format!("motor_offset_{j}"), &noise.motor_offset)));
    cols.extend([
        ("joint_position".into(), &noise.joint_position),
        ("joint_velocity".into(), &noise.joint_velocity),
        ("angular_velocity".into(), &noise.angular_velocity),
        ("orientation".into(), &noise.orientation),
    ]);
    cols
}

/// `n` per-episode dynamics draws plus one per-step sensor draw each.
pub fn randomize(noise: &NoiseConfig, joint_count: usize, n: usize, seed: u64) -> Result<crate::records::Table> {
    noise.validate()?;
    let header = randomize_columns(noise, joint_count).into_iter().map(|(h, _)| h).collect();
    let mut table = crate::records::Table::new(header);
    let mut rng = RngStream::new(seed, 0);
    for _ in 0..n {
        let d = sample_dynamics(&mut rng, noise, joint_count);
        let mut row = vec![d.friction, d.payload, d.motor_strength, d.pd_factors.0, d.pd_factors.1, d.system_delay_ms];
        row.extend_from_slice(&d.motor_offset);
        for spec in [&noise.joint_position, &noise.joint_velocity, &noise.angular_velocity, &noise.orientation] {
            row.push(spec.sample(&mut rng));
        }
        table.rows.push(row);
    }
    Ok(table)
}
