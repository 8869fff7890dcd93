//! Policy evaluation and decoder-based state estimation.

use alloc::vec::Vec;

use super::agent::Agent;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::obs::{Channel, Layout};
use crate::rng::RngStream;

/// One evaluated policy step, handed to the caller's observer.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalStep<'a> {
    pub episode: usize,
    pub step: usize,
    /// Privileged state after the step.
    pub state: &'a [f64],
    pub action: &'a [f64],
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    pub episode: usize,
    pub steps: usize,
    pub ret: f64,
    pub fell: bool,
    /// Ran to the time limit without falling.
    pub success: bool,
    /// Mean `|v_x - v_x_cmd|` over the episode.
    pub tracking_error: f64,
}

fn sample_action(mean: &[f64], std: &[f64], rng: Option<&mut RngStream>) -> Vec<f64> {
    match rng {
        Some(r) => mean.iter().zip(std).map(|(m, s)| m + s * r.normal()).collect(),
        None => mean.to_vec(),
    }
}

/// Runs `episodes` full episodes. With `rng = None` the policy mean is used.
pub fn evaluate(
    agent: &Agent,
    env: &mut dyn Environment,
    episodes: usize,
    mut rng: Option<&mut RngStream>,
    observer: &mut dyn FnMut(&EvalStep<'_>),
) -> Result<Vec<EpisodeOutcome>> {
    let layout = Layout::state(env.config());
    let vel = layout.range(Channel::BaseLinearVelocity).ok_or(Error::MissingChannel("base_lin_vel"))?;
    let cmd = layout.range(Channel::Commands).ok_or(Error::MissingChannel("command"))?;
    let std = agent.std();
    let mut out = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let (mut obs, _) = env.reset()?;
        let mut hidden = agent.zero_hidden(1);
        let (mut ret, mut err, mut steps) = (0.0, 0.0, 0);
        loop {
            let p = agent.act(&[&obs.0[..]], &hidden)?;
            hidden = p.hidden;
            let action = sample_action(p.mean.row_slice(0), &std, rng.as_deref_mut());
            let t = env.step(&action)?;
            steps += 1;
            ret += t.reward;
            err += (t.state.0[vel.start] - t.state.0[cmd.start]).abs();
            observer(&EvalStep { episode, step: steps, state: &t.state.0, action: &action, reward: t.reward });
            if t.done {
                out.push(EpisodeOutcome {
                    episode,
                    steps,
                    ret,
                    fell: t.fell,
                    success: !t.fell,
                    tracking_error: err / steps as f64,
                });
                break;
            }
            obs = t.obs;
        }
    }
    Ok(out)
}

/// Decoder prediction and ground truth for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub episode: usize,
    pub step: usize,
    pub predicted: Vec<f64>,
    pub truth: Vec<f64>,
}

/// Rolls out the policy and records `(decode(z_t), s_t)` at every step.
/// With `rng = None` the policy mean is used; `max_steps` truncates long episodes.
pub fn estimate_state(
    agent: &Agent,
    env: &mut dyn Environment,
    episodes: usize,
    max_steps: usize,
    mut rng: Option<&mut RngStream>,
) -> Result<Vec<EstimateRecord>> {
    if !agent.has_decoder() {
        return Err(Error::Architecture("state estimation needs a decoder".into()));
    }
    if env.config().state_dim() != agent.dims().state || env.config().obs_dim() != agent.dims().obs {
        return Err(Error::Architecture("environment dimensions do not match the checkpoint".into()));
    }
    let std = agent.std();
    let mut out = Vec::new();
    for episode in 0..episodes {
        let (mut obs, mut state) = env.reset()?;
        let mut hidden = agent.zero_hidden(1);
        for step in 0..max_steps {
            let p = agent.act(&[&obs.0[..]], &hidden)?;
            let rec = agent.reconstruct(&Tensor::row(p.latent.row_slice(0)))?;
            out.push(EstimateRecord { episode, step, predicted: rec[0].clone(), truth: state.0.clone() });
            hidden = p.hidden;
            let action = sample_action(p.mean.row_slice(0), &std, rng.as_deref_mut());
            let t = env.step(&action)?;
            if t.done {
                break;
            }
            obs = t.obs;
            state = t.state;
        }
    }
    Ok(out)
}

/// Mean squared error over the selected state indices.
pub fn channel_mse(records: &[EstimateRecord], idx: core::ops::Range<usize>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in records {
        for k in idx.clone() {
            let d = r.predicted[k] - r.truth[k];
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// MSE of the best constant predictor (the per-index mean) over the selected indices.
pub fn constant_predictor_mse(records: &[EstimateRecord], idx: core::ops::Range<usize>) -> f64 {
    if records.is_empty() || idx.is_empty() {
        return f64::NAN;
    }
    let n = records.len() as f64;
    let mut total = 0.0;
    for k in idx.clone() {
        let mean = records.iter().map(|r| r.truth[k]).sum::<f64>() / n;
        total += records.iter().map(|r| (r.truth[k] - mean) * (r.truth[k] - mean)).sum::<f64>() / n;
    }
    total / idx.len() as f64
}

/// Named single- or multi-index channels reported by the estimation summary.
pub fn estimate_channels(layout: &Layout) -> Vec<(&'static str, core::ops::Range<usize>)> {
    let mut out = Vec::new();
    if let Some(r) = layout.range(Channel::BaseLinearVelocity) {
        out.push(("forward_velocity", r.start..r.start + 1));
        out.push(("base_lin_vel", r));
    }
    if let Some(r) = layout.range(Channel::Orientation) {
        out.push(("yaw", r.end - 1..r.end));
    }
    if let Some(r) = layout.range(Channel::FeetContact) {
        out.push(("feet_contact", r));
    }
    if let Some(r) = layout.range(Channel::HeightScan) {
        if !r.is_empty() {
            out.push(("height_scan", r));
        }
    }
    out
}
