use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::normalize::RunningNorm;
use super::{NetworkConfig, Variant};
use crate::error::{check_len, Error, Result};
use crate::nn::{GaussianHead, Graph, GruCell, InitScheme, Mlp, ParamId, ParamStore, Tensor, Var};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub obs: usize,
    pub state: usize,
    pub action: usize,
}

/// Output of one recurrent policy evaluation on a batch of environments.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyStep {
    pub hidden: Tensor,
    pub latent: Tensor,
    pub mean: Tensor,
}

/// Networks, their parameters and the input normalizers.
#[derive(Debug, Clone)]
pub struct Agent {
    net: NetworkConfig,
    dims: Dims,
    store: ParamStore,
    gru: GruCell,
    encoder: Option<Mlp>,
    decoder: Option<Mlp>,
    actor: Mlp,
    head: GaussianHead,
    critic: Mlp,
    pub obs_norm: RunningNorm,
    pub state_norm: RunningNorm,
    pub return_norm: RunningNorm,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(input);
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

impl Agent {
    pub fn new(net: &NetworkConfig, dims: Dims, normalize: bool, rng: &mut RngStream) -> Result<Self> {
        net.validate()?;
        if dims.obs == 0 || dims.state == 0 || dims.action == 0 {
            return Err(Error::Architecture(String::from("obs, state and action dims must be positive")));
        }
        let mut store = ParamStore::new();
        let s = InitScheme::FanIn;
        let gru = GruCell::new(&mut store, rng, "gru", dims.obs, net.gru_hidden, s);
        let (encoder, decoder, actor) = match net.variant {
            Variant::Dwl => {
                let enc = Mlp::new(&mut store, rng, "encoder", &widths(net.gru_hidden, &net.encoder_hidden, net.latent), s);
                let dec = Mlp::new(&mut store, rng, "decoder", &widths(net.latent, &net.decoder_hidden, dims.state), s);
                let act = Mlp::new(&mut store, rng, "actor", &widths(net.latent, &net.actor_hidden, dims.action), s);
                (Some(enc), Some(dec), act)
            }
            Variant::PpoBaseline => {
                let act =
                    Mlp::new(&mut store, rng, "actor", &widths(net.gru_hidden, &net.baseline_hidden, dims.action), s);
                (None, None, act)
            }
        };
        actor.scale_output(&mut store, net.actor_output_scale);
        let head = GaussianHead::new(&mut store, "policy", dims.action, net.init_std);
        let critic = Mlp::new(&mut store, rng, "critic", &widths(dims.state, &net.critic_hidden, 1), s);
        Ok(Self {
            net: net.clone(),
            dims,
            store,
            gru,
            encoder,
            decoder,
            actor,
            head,
            critic,
            obs_norm: RunningNorm::new(dims.obs, normalize),
            state_norm: RunningNorm::new(dims.state, normalize),
            return_norm: RunningNorm::new(1, normalize),
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.net
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn variant(&self) -> Variant {
        self.net.variant
    }

    pub fn has_decoder(&self) -> bool {
        self.decoder.is_some()
    }

    pub fn latent_dim(&self) -> usize {
        match self.net.variant {
            Variant::Dwl => self.net.latent,
            Variant::PpoBaseline => self.net.gru_hidden,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.net.gru_hidden
    }

    /// Trainable scalars on the deployed path: GRU, encoder head, policy MLP and log-std.
    pub fn actor_param_count(&self) -> usize {
        self.gru.param_count()
            + self.encoder.as_ref().map_or(0, Mlp::param_count)
            + self.actor.param_count()
            + self.head.param_count()
    }

    pub fn decoder_param_count(&self) -> usize {
        self.decoder.as_ref().map_or(0, Mlp::param_count)
    }

    pub fn critic_param_count(&self) -> usize {
        self.critic.param_count()
    }

    /// Parameters of the decoder and critic; the actor path must never reach these.
    pub fn privileged_params(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for mlp in self.decoder.iter().chain(core::iter::once(&self.critic)) {
            for l in &mlp.layers {
                ids.push(l.weight);
                ids.push(l.bias);
            }
        }
        ids
    }

    pub fn log_std_param(&self) -> ParamId {
        self.head.log_std
    }

    pub fn std(&self) -> Vec<f64> {
        self.head.std(&self.store)
    }

    /// `(h', z)` for a batch of normalized observations.
    pub fn encode(&self, g: &mut Graph<'_>, obs: Var, h: Var) -> Result<(Var, Var)> {
        let h2 = self.gru.step(g, obs, h)?;
        let z = match &self.encoder {
            Some(enc) => enc.forward(g, h2)?,
            None => h2,
        };
        Ok((h2, z))
    }

    /// Reconstructed (normalized) state from the latent.
    pub fn decode(&self, g: &mut Graph<'_>, z: Var) -> Result<Var> {
        match &self.decoder {
            Some(dec) => dec.forward(g, z),
            None => Err(Error::Architecture(String::from("the PPO baseline has no state decoder"))),
        }
    }

    pub fn policy_mean(&self, g: &mut Graph<'_>, z: Var) -> Result<Var> {
        self.actor.forward(g, z)
    }

    pub fn log_std(&self, g: &mut Graph<'_>) -> Var {
        g.param(self.head.log_std)
    }

    /// Critic output in normalized return units, `n x 1`.
    pub fn value(&self, g: &mut Graph<'_>, state: Var) -> Result<Var> {
        self.critic.forward(g, state)
    }

    pub fn zero_hidden(&self, n: usize) -> Tensor {
        Tensor::zeros(n, self.net.gru_hidden)
    }

    /// Stacks rows after applying `norm`.
    pub fn normalized_batch<'a>(norm: &RunningNorm, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Tensor> {
        let mut data = Vec::new();
        let mut n = 0;
        for r in rows {
            check_len("input row", norm.dim(), r.len())?;
            data.extend(norm.normalize(r));
            n += 1;
        }
        Tensor::from_vec(n, norm.dim(), data)
    }

    /// Recurrent policy step on raw observations.
    pub fn act(&self, raw_obs: &[&[f64]], hidden: &Tensor) -> Result<PolicyStep> {
        let x = Self::normalized_batch(&self.obs_norm, raw_obs.iter().copied())?;
        let mut g = Graph::new(&self.store);
        let xv = g.constant(x);
        let hv = g.constant(hidden.clone());
        let (h2, z) = self.encode(&mut g, xv, hv)?;
        let mean = self.policy_mean(&mut g, z)?;
        Ok(PolicyStep { hidden: g.value(h2).clone(), latent: g.value(z).clone(), mean: g.value(mean).clone() })
    }

    /// Value estimates in return units for raw states.
    pub fn values(&self, raw_states: &[&[f64]]) -> Result<Vec<f64>> {
        let s = Self::normalized_batch(&self.state_norm, raw_states.iter().copied())?;
        let mut g = Graph::new(&self.store);
        let sv = g.constant(s);
        let v = self.value(&mut g, sv)?;
        Ok(g.value(v).data().iter().map(|x| self.return_norm.denormalize(&[*x])[0]).collect())
    }

    /// Decoded states in raw units for a batch of latents.
    pub fn reconstruct(&self, latent: &Tensor) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new(&self.store);
        let z = g.constant(latent.clone());
        let s = self.decode(&mut g, z)?;
        let out = g.value(s);
        Ok((0..out.rows()).map(|r| self.state_norm.denormalize(out.row_slice(r))).collect())
    }

    /// Named tensors for persistence: parameters followed by normalizer statistics.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> =
            self.store.iter().map(|(_, name, t)| (String::from(name), t.clone())).collect();
        for (tag, n) in [("obs", &self.obs_norm), ("state", &self.state_norm), ("return", &self.return_norm)] {
            out.push((format!("norm.{tag}.mean"), Tensor::row(&n.mean)));
            out.push((format!("norm.{tag}.var"), Tensor::row(&n.var)));
            out.push((format!("norm.{tag}.count"), Tensor::scalar(n.count)));
        }
        out
    }

    /// Inverse of [`Agent::named_tensors`]; every tensor must match by name and shape.
    pub fn load_named(&mut self, tensors: &[(String, Tensor)]) -> Result<()> {
        let (norms, params): (Vec<_>, Vec<_>) = tensors.iter().cloned().partition(|(n, _)| n.starts_with("norm."));
        self.store.load_named(&params)?;
        for (tag, n) in [("obs", &mut self.obs_norm), ("state", &mut self.state_norm), ("return", &mut self.return_norm)]
        {
            let find = |suffix: &str| {
                let key = format!("norm.{tag}.{suffix}");
                norms
                    .iter()
                    .find(|(name, _)| *name == key)
                    .map(|(_, t)| t.clone())
                    .ok_or_else(|| Error::Architecture(format!("missing tensor `{key}`")))
            };
            let (mean, var, count) = (find("mean")?, find("var")?, find("count")?);
            if mean.len() != n.dim() || var.len() != n.dim() || count.len() != 1 {
                return Err(Error::Architecture(format!("normalizer `{tag}` expects {} channels", n.dim())));
            }
            n.mean = mean.into_vec();
            n.var = var.into_vec();
            n.count = count.item();
        }
        Ok(())
    }
}
