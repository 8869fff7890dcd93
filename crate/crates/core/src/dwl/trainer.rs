use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::agent::Agent;
use super::gae::{gae, normalize_advantages};
use super::loss::{l1_row_mean, ppo_objective_graph, residual_norm_mean};
use super::{Hyperparams, Variant};
use crate::env::Environment;
use crate::error::{check_len, Error, Result};
use crate::nn::{clip_grad_norm, Adam, Gradients, Graph, Tensor, Var};
use crate::obs::{ObsVector, StateVector};
use crate::rng::RngStream;

const HALF_LN_TAU: f64 = 0.918_938_533_204_672_8;

/// What a rollout worker reports for one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub reward: f64,
    pub done: bool,
    pub fell: bool,
    /// Next policy input; already reset when `done`.
    pub obs: ObsVector,
    pub state: StateVector,
}

/// Steps `env` and resets it at episode end.
pub fn step_and_reset(env: &mut dyn Environment, action: &[f64]) -> Result<StepOutput> {
    let t = env.step(action)?;
    let (obs, state) = if t.done { env.reset()? } else { (t.obs, t.state) };
    Ok(StepOutput { reward: t.reward, done: t.done, fell: t.fell, obs, state })
}

/// Applies one action per environment. Implementations may run in parallel
/// but must return results in environment order.
pub trait RolloutRunner {
    fn step_all(&mut self, envs: &mut [Box<dyn Environment>], actions: &[Vec<f64>]) -> Result<Vec<StepOutput>>;
}

/// In-order, single-threaded reference runner.
#[derive(Debug, Clone, Copy, Default)]
pub struct SerialRunner;

impl RolloutRunner for SerialRunner {
    fn step_all(&mut self, envs: &mut [Box<dyn Environment>], actions: &[Vec<f64>]) -> Result<Vec<StepOutput>> {
        check_len("actions", envs.len(), actions.len())?;
        envs.iter_mut().zip(actions).map(|(e, a)| step_and_reset(e.as_mut(), a)).collect()
    }
}

/// One horizon of experience; entry `(t, e)` lives at `t * num_envs + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub horizon: usize,
    pub obs: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    /// Log-probability under the behavior policy.
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub fell: Vec<bool>,
    /// Encoder hidden state before step 0, one row per environment.
    pub h0: Tensor,
    /// `V(s_horizon)` per environment.
    pub bootstrap: Vec<f64>,
}

impl RolloutBuffer {
    pub fn index(&self, t: usize, e: usize) -> usize {
        t * self.num_envs + e
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// `(rewards, values + bootstrap, dones)` of environment `e`.
    pub fn sequence(&self, e: usize) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
        let idx: Vec<usize> = (0..self.horizon).map(|t| self.index(t, e)).collect();
        let mut values: Vec<f64> = idx.iter().map(|&i| self.values[i]).collect();
        values.push(self.bootstrap[e]);
        (idx.iter().map(|&i| self.rewards[i]).collect(), values, idx.iter().map(|&i| self.dones[i]).collect())
    }
}

/// Per-update training log row.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub update: usize,
    /// Filled in by the caller; the core has no clock.
    pub wall_time: f64,
    /// Mean return of the most recent completed episodes (NaN before the first one ends).
    pub mean_return: f64,
    pub mean_episode_length: f64,
    /// Fraction of those episodes that ended in a fall.
    pub fall_rate: f64,
    pub episodes: usize,
    pub mean_step_reward: f64,
    pub denoise_loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub total_loss: f64,
    pub recon_mse: f64,
    pub explained_variance: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub action_std: f64,
}

impl UpdateMetrics {
    /// Equality that ignores `wall_time`.
    pub fn same_numbers(&self, other: &Self) -> bool {
        let mut a = self.clone();
        a.wall_time = other.wall_time;
        let bits = |m: &UpdateMetrics| {
            [
                m.mean_return,
                m.mean_episode_length,
                m.fall_rate,
                m.mean_step_reward,
                m.denoise_loss,
                m.policy_loss,
                m.value_loss,
                m.total_loss,
                m.recon_mse,
                m.explained_variance,
                m.entropy,
                m.grad_norm,
                m.action_std,
            ]
            .map(f64::to_bits)
        };
        a.update == other.update && a.episodes == other.episodes && bits(&a) == bits(other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Episode {
    ret: f64,
    len: usize,
    fell: bool,
}

/// Owns the agent, the optimizer and the environments.
pub struct Trainer {
    agent: Agent,
    hyper: Hyperparams,
    adam: Adam,
    envs: Vec<Box<dyn Environment>>,
    obs: Vec<ObsVector>,
    states: Vec<StateVector>,
    hidden: Tensor,
    policy_rngs: Vec<RngStream>,
    shuffle_rng: RngStream,
    ep_return: Vec<f64>,
    ep_len: Vec<usize>,
    recent: VecDeque<Episode>,
    update: usize,
}

#[derive(Default)]
struct LossTotals {
    denoise: f64,
    policy: f64,
    value: f64,
    total: f64,
    recon: f64,
    entropy: f64,
    grad_norm: f64,
    count: f64,
}

impl Trainer {
    pub fn new(agent: Agent, hyper: Hyperparams, mut envs: Vec<Box<dyn Environment>>, seed: u64) -> Result<Self> {
        hyper.validate()?;
        check_len("environments", hyper.num_envs, envs.len())?;
        let dims = agent.dims();
        let mut obs = Vec::with_capacity(envs.len());
        let mut states = Vec::with_capacity(envs.len());
        for env in envs.iter_mut() {
            let cfg = env.config();
            check_len("observation dim", dims.obs, cfg.obs_dim())?;
            check_len("state dim", dims.state, cfg.state_dim())?;
            check_len("action dim", dims.action, env.action_dim())?;
            let (o, s) = env.reset()?;
            obs.push(o);
            states.push(s);
        }
        let n = envs.len();
        let adam = Adam::new(agent.params(), hyper.learning_rate);
        Ok(Self {
            hidden: agent.zero_hidden(n),
            adam,
            envs,
            obs,
            states,
            policy_rngs: (0..n).map(|e| RngStream::new(seed, 1_000_000 + e as u64)).collect(),
            shuffle_rng: RngStream::new(seed, 999_999),
            ep_return: vec![0.0; n],
            ep_len: vec![0; n],
            recent: VecDeque::new(),
            update: 0,
            agent,
            hyper,
        })
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn into_agent(self) -> Agent {
        self.agent
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn updates_done(&self) -> usize {
        self.update
    }

    /// Collects one horizon with the behavior policy.
    pub fn collect(&mut self, runner: &mut dyn RolloutRunner) -> Result<RolloutBuffer> {
        let n = self.envs.len();
        let horizon = self.hyper.horizon;
        let std = self.agent.std();
        let log_std_sum: f64 = std.iter().map(|s| libm::log(*s)).sum();
        let a_dim = std.len();
        let cap = n * horizon;
        let mut buf = RolloutBuffer {
            num_envs: n,
            horizon,
            obs: Vec::with_capacity(cap),
            states: Vec::with_capacity(cap),
            actions: Vec::with_capacity(cap),
            log_probs: Vec::with_capacity(cap),
            values: Vec::with_capacity(cap),
            rewards: Vec::with_capacity(cap),
            dones: Vec::with_capacity(cap),
            fell: Vec::with_capacity(cap),
            h0: self.hidden.clone(),
            bootstrap: Vec::new(),
        };
        for _ in 0..horizon {
            let obs_rows: Vec<&[f64]> = self.obs.iter().map(|o| &o.0[..]).collect();
            let step = self.agent.act(&obs_rows, &self.hidden)?;
            let state_rows: Vec<&[f64]> = self.states.iter().map(|s| &s.0[..]).collect();
            let values = self.agent.values(&state_rows)?;
            let mut actions = Vec::with_capacity(n);
            for e in 0..n {
                let mean = step.mean.row_slice(e);
                let mut a = Vec::with_capacity(a_dim);
                let mut quad = 0.0;
                for k in 0..a_dim {
                    let eps = self.policy_rngs[e].normal();
                    quad += eps * eps;
                    a.push(mean[k] + std[k] * eps);
                }
                buf.log_probs.push(-0.5 * quad - log_std_sum - HALF_LN_TAU * a_dim as f64);
                actions.push(a);
            }
            let out = runner.step_all(&mut self.envs, &actions)?;
            check_len("runner outputs", n, out.len())?;
            let mut hidden = step.hidden;
            let h_dim = hidden.cols();
            for (e, o) in out.into_iter().enumerate() {
                buf.obs.push(core::mem::replace(&mut self.obs[e], o.obs).0);
                buf.states.push(core::mem::replace(&mut self.states[e], o.state).0);
                buf.values.push(values[e]);
                buf.rewards.push(o.reward);
                buf.dones.push(o.done);
                buf.fell.push(o.fell);
                self.ep_return[e] += o.reward;
                self.ep_len[e] += 1;
                if o.done {
                    self.recent.push_back(Episode { ret: self.ep_return[e], len: self.ep_len[e], fell: o.fell });
                    self.ep_return[e] = 0.0;
                    self.ep_len[e] = 0;
                    hidden.data_mut()[e * h_dim..(e + 1) * h_dim].fill(0.0);
                }
            }
            buf.actions.extend(actions);
            self.hidden = hidden;
        }
        let window = n.max(10);
        while self.recent.len() > window {
            self.recent.pop_front();
        }
        let state_rows: Vec<&[f64]> = self.states.iter().map(|s| &s.0[..]).collect();
        buf.bootstrap = self.agent.values(&state_rows)?;
        Ok(buf)
    }

    /// One rollout followed by the learner phase.
    pub fn update(&mut self, runner: &mut dyn RolloutRunner) -> Result<UpdateMetrics> {
        let buf = self.collect(runner)?;
        let episodes = buf.dones.iter().filter(|d| **d).count();
        let n = buf.num_envs;
        let horizon = buf.horizon;

        let mut adv = vec![0.0; buf.len()];
        let mut returns = vec![0.0; buf.len()];
        for e in 0..n {
            let (r, v, d) = buf.sequence(e);
            let a = gae(&r, &v, &d, self.hyper.gamma, self.hyper.gae_lambda)?;
            for t in 0..horizon {
                let i = buf.index(t, e);
                adv[i] = a.advantages[t];
                returns[i] = a.returns[t];
            }
        }
        let explained_variance = explained_variance(&buf.values, &returns);
        if self.hyper.normalize_advantages {
            normalize_advantages(&mut adv);
        }
        self.agent.return_norm.update(returns.iter().map(core::slice::from_ref))?;

        let obs_n: Vec<Vec<f64>> = buf.obs.iter().map(|o| self.agent.obs_norm.normalize(o)).collect();
        let states_n: Vec<Vec<f64>> = buf.states.iter().map(|s| self.agent.state_norm.normalize(s)).collect();
        let returns_n: Vec<f64> = returns.iter().map(|r| self.agent.return_norm.normalize(&[*r])[0]).collect();

        let mut totals = LossTotals::default();
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..self.hyper.epochs {
            for i in (1..n).rev() {
                let j = self.shuffle_rng.below(i + 1);
                order.swap(i, j);
            }
            let groups = self.hyper.minibatches;
            for g in 0..groups {
                let lo = g * n / groups;
                let hi = (g + 1) * n / groups;
                let envs = &order[lo..hi];
                if envs.is_empty() {
                    continue;
                }
                let batch = MiniBatch { buf: &buf, envs, obs: &obs_n, states: &states_n, adv: &adv, returns: &returns_n };
                self.learn(&batch, &mut totals)?;
            }
        }

        self.agent.obs_norm.update(buf.obs.iter().map(|o| &o[..]))?;
        self.agent.state_norm.update(buf.states.iter().map(|s| &s[..]))?;
        self.update += 1;

        let c = totals.count.max(1.0);
        let recent: Vec<Episode> = self.recent.iter().copied().collect();
        let (mean_return, mean_len, fall_rate) = if recent.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let k = recent.len() as f64;
            (
                recent.iter().map(|e| e.ret).sum::<f64>() / k,
                recent.iter().map(|e| e.len as f64).sum::<f64>() / k,
                recent.iter().filter(|e| e.fell).count() as f64 / k,
            )
        };
        let std = self.agent.std();
        Ok(UpdateMetrics {
            update: self.update,
            wall_time: 0.0,
            mean_return,
            mean_episode_length: mean_len,
            fall_rate,
            episodes,
            mean_step_reward: buf.rewards.iter().sum::<f64>() / buf.len().max(1) as f64,
            denoise_loss: totals.denoise / c,
            policy_loss: totals.policy / c,
            value_loss: totals.value / c,
            total_loss: totals.total / c,
            recon_mse: totals.recon / c,
            explained_variance,
            entropy: totals.entropy / c,
            grad_norm: totals.grad_norm / c,
            action_std: std.iter().sum::<f64>() / std.len().max(1) as f64,
        })
    }

    fn learn(&mut self, mb: &MiniBatch<'_>, totals: &mut LossTotals) -> Result<()> {
        let h = &self.hyper;
        let buf = mb.buf;
        let m = mb.envs.len();
        let rows: Vec<usize> = (0..buf.horizon).flat_map(|t| mb.envs.iter().map(move |&e| buf.index(t, e))).collect();
        let gather = |src: &[Vec<f64>], cols: usize| -> Result<Tensor> {
            let mut data = Vec::with_capacity(rows.len() * cols);
            for &i in &rows {
                data.extend_from_slice(&src[i]);
            }
            Tensor::from_vec(rows.len(), cols, data)
        };
        let dims = self.agent.dims();
        let states = gather(mb.states, dims.state)?;
        let actions = gather(&buf.actions, dims.action)?;
        let logp_old = Tensor::column(&rows.iter().map(|&i| buf.log_probs[i]).collect::<Vec<_>>());
        let adv = Tensor::column(&rows.iter().map(|&i| mb.adv[i]).collect::<Vec<_>>());
        let returns = Tensor::column(&rows.iter().map(|&i| mb.returns[i]).collect::<Vec<_>>());

        let mut g = Graph::new(self.agent.params());
        let mut hidden = Tensor::zeros(m, self.agent.hidden_dim());
        let hc = hidden.cols();
        for (r, &e) in mb.envs.iter().enumerate() {
            hidden.data_mut()[r * hc..(r + 1) * hc].copy_from_slice(buf.h0.row_slice(e));
        }
        let mut hv = g.constant(hidden);
        let mut zs: Vec<Var> = Vec::with_capacity(buf.horizon);
        for t in 0..buf.horizon {
            let mut x = Vec::with_capacity(m * dims.obs);
            let mut keep = Vec::with_capacity(m);
            for &e in mb.envs {
                let i = buf.index(t, e);
                x.extend_from_slice(&mb.obs[i]);
                keep.push(if buf.dones[i] { 0.0 } else { 1.0 });
            }
            let xv = g.constant(Tensor::from_vec(m, dims.obs, x)?);
            let (h2, z) = self.agent.encode(&mut g, xv, hv)?;
            zs.push(z);
            let mask = g.constant(Tensor::column(&keep));
            hv = g.mul_col(h2, mask)?;
        }
        let z = g.concat_rows(&zs)?;

        let mean = self.agent.policy_mean(&mut g, z)?;
        let log_std = self.agent.log_std(&mut g);
        let logp = g.gaussian_log_prob(mean, log_std, actions)?;
        let surrogate = ppo_objective_graph(&mut g, logp, &logp_old, &adv, h.clip_low, h.clip_high)?;
        let entropy = g.gaussian_entropy(log_std);
        let bonus = g.scale(entropy, h.entropy_coef);
        let objective = g.add(surrogate, bonus)?;
        let policy = g.scale(objective, -1.0);

        let sv = g.constant(states);
        let values = self.agent.value(&mut g, sv)?;
        let rv = g.constant(returns);
        let value = residual_norm_mean(&mut g, values, rv, h.squared_l2)?;

        let mut total = g.scale(policy, h.lambda_pi);
        let weighted_value = g.scale(value, h.lambda_v);
        total = g.add(total, weighted_value)?;
        let (mut denoise_v, mut recon_v) = (0.0, 0.0);
        if self.agent.variant() == Variant::Dwl {
            let z_in = if h.detach_decoder { g.constant(g.value(z).clone()) } else { z };
            let rec = self.agent.decode(&mut g, z_in)?;
            let err = residual_norm_mean(&mut g, rec, sv, h.squared_l2)?;
            let l1 = l1_row_mean(&mut g, z);
            let l1 = g.scale(l1, h.lambda_r);
            let denoise = g.add(err, l1)?;
            let weighted = g.scale(denoise, h.denoise_weight);
            total = g.add(total, weighted)?;
            denoise_v = g.value(denoise).item();
            let (rt, st) = (g.value(rec), g.value(sv));
            recon_v = rt.data().iter().zip(st.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / rt.len() as f64;
        }

        let total_v = g.value(total).item();
        if !total_v.is_finite() {
            return Err(Error::Divergence { update: self.update + 1, detail: format!("loss is {total_v}") });
        }
        let mut grads = Gradients::zeros_like(self.agent.params());
        g.backward(total, &mut grads)?;
        if !grads.all_finite() {
            return Err(Error::Divergence { update: self.update + 1, detail: "non-finite gradient".into() });
        }
        let grad_norm = clip_grad_norm(&mut grads, h.max_grad_norm);
        totals.denoise += denoise_v;
        totals.policy += g.value(policy).item();
        totals.value += g.value(value).item();
        totals.total += total_v;
        totals.recon += recon_v;
        totals.entropy += g.value(entropy).item();
        totals.grad_norm += grad_norm;
        totals.count += 1.0;
        drop(g);
        self.adam.step(self.agent.params_mut(), &grads);
        let finite = self.agent.params().iter().all(|(_, _, t)| t.all_finite());
        if !finite {
            return Err(Error::Divergence { update: self.update + 1, detail: "non-finite parameters".into() });
        }
        Ok(())
    }
}

struct MiniBatch<'a> {
    buf: &'a RolloutBuffer,
    envs: &'a [usize],
    obs: &'a [Vec<f64>],
    states: &'a [Vec<f64>],
    adv: &'a [f64],
    returns: &'a [f64],
}

/// `1 - Var(R - V) / Var(R)`; NaN when the returns are constant.
pub fn explained_variance(values: &[f64], returns: &[f64]) -> f64 {
    let n = returns.len() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let var = |x: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = x.collect();
        let m = v.iter().sum::<f64>() / n;
        v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n
    };
    let vr = var(&mut returns.iter().copied());
    if vr == 0.0 {
        return f64::NAN;
    }
    1.0 - var(&mut returns.iter().zip(values).map(|(r, v)| r - v)) / vr
}

#[cfg(test)]
mod tests;
