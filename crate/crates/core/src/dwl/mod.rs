//! Encoder/decoder world model with an asymmetric PPO actor-critic.
//!
//! The actor sees only `obs -> GRU -> z -> policy`. The decoder maps `z` back
//! to the full privileged state and the critic reads that state directly.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

pub mod agent;
pub mod estimate;
pub mod gae;
pub mod loss;
pub mod normalize;
pub mod trainer;

pub use agent::{Agent, Dims, PolicyStep};
pub use estimate::{
    channel_mse, constant_predictor_mse, estimate_channels, estimate_state, evaluate, EpisodeOutcome, EstimateRecord,
    EvalStep,
};
pub use gae::{gae, normalize_advantages, Advantage};
pub use loss::{denoise_loss, dwl_total_loss, ppo_objective, value_loss};
pub use normalize::RunningNorm;
pub use trainer::{
    explained_variance, step_and_reset, RolloutBuffer, RolloutRunner, SerialRunner, StepOutput, Trainer, UpdateMetrics,
};

/// Which actor stack is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// GRU -> encoder head -> latent -> small actor, plus the state decoder.
    Dwl,
    /// GRU -> wide actor head; no decoder, no denoising term.
    PpoBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub variant: Variant,
    pub gru_hidden: usize,
    /// Hidden widths of the encoder head between the GRU and the latent.
    pub encoder_hidden: Vec<usize>,
    pub latent: usize,
    pub decoder_hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Actor head widths used by [`Variant::PpoBaseline`].
    pub baseline_hidden: Vec<usize>,
    /// Initial policy standard deviation.
    pub init_std: f64,
    /// Multiplier on the initial weights of the policy output layer.
    pub actor_output_scale: f64,
}

impl NetworkConfig {
    /// Widths of the published networks.
    pub fn paper() -> Self {
        Self {
            variant: Variant::Dwl,
            gru_hidden: 256,
            encoder_hidden: vec![256],
            latent: 24,
            decoder_hidden: vec![64],
            actor_hidden: vec![48],
            critic_hidden: vec![512, 512, 256],
            baseline_hidden: vec![256, 128],
            init_std: 1.0,
            actor_output_scale: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gru_hidden == 0 || self.latent == 0 {
            return Err(config_err("net.gru_hidden", "GRU and latent widths must be positive"));
        }
        let lists = [
            ("net.encoder_hidden", &self.encoder_hidden),
            ("net.decoder_hidden", &self.decoder_hidden),
            ("net.actor_hidden", &self.actor_hidden),
            ("net.critic_hidden", &self.critic_hidden),
            ("net.baseline_hidden", &self.baseline_hidden),
        ];
        for (field, widths) in lists {
            if widths.contains(&0) {
                return Err(config_err(field, "layer widths must be positive"));
            }
        }
        if !(self.init_std > 0.0) {
            return Err(config_err("net.init_std", "must be positive"));
        }
        if !(self.actor_output_scale > 0.0) {
            return Err(config_err("net.actor_output_scale", "must be positive"));
        }
        Ok(())
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::paper()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub clip_low: f64,
    pub clip_high: f64,
    pub learning_rate: f64,
    pub lambda_r: f64,
    pub lambda_pi: f64,
    pub lambda_v: f64,
    pub epochs: usize,
    pub num_envs: usize,
    pub horizon: usize,
    /// Env sequences are split into this many groups per epoch.
    pub minibatches: usize,
    /// Global gradient-norm clip; 0 disables.
    pub max_grad_norm: f64,
    /// Use squared L2 in the reconstruction and value losses.
    pub squared_l2: bool,
    pub normalize_advantages: bool,
    /// Weight of the denoising term; 0 trains the same network without it.
    pub denoise_weight: f64,
    /// Running mean/std normalization of observations, states and value targets.
    pub normalize_inputs: bool,
    /// Train the decoder on a stop-gradient copy of the latent, so reconstruction
    /// never shapes the encoder. Used by the no-denoising ablation's probe.
    pub detach_decoder: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.995,
            gae_lambda: 0.95,
            entropy_coef: 0.005,
            clip_low: 0.8,
            clip_high: 1.2,
            learning_rate: 1e-5,
            lambda_r: 0.002,
            lambda_pi: 5.0,
            lambda_v: 5.0,
            epochs: 2,
            num_envs: 64,
            horizon: 24,
            minibatches: 4,
            max_grad_norm: 1.0,
            squared_l2: false,
            normalize_advantages: true,
            denoise_weight: 1.0,
            normalize_inputs: true,
            detach_decoder: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(config_err("hyper.gamma", "must satisfy 0 < gamma <= 1"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(config_err("hyper.gae_lambda", "must lie in [0, 1]"));
        }
        if !(self.clip_low < 1.0 && 1.0 < self.clip_high) {
            return Err(config_err("hyper.clip_low", "clip range must satisfy c1 < 1 < c2"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(config_err("hyper.learning_rate", "must be positive"));
        }
        for (field, v) in [
            ("hyper.lambda_r", self.lambda_r),
            ("hyper.lambda_pi", self.lambda_pi),
            ("hyper.lambda_v", self.lambda_v),
            ("hyper.entropy_coef", self.entropy_coef),
            ("hyper.denoise_weight", self.denoise_weight),
            ("hyper.max_grad_norm", self.max_grad_norm),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(config_err(field, "must be finite and non-negative"));
            }
        }
        if self.epochs == 0 || self.horizon == 0 || self.num_envs == 0 {
            return Err(config_err("hyper.num_envs", "epochs, horizon and num_envs must be at least 1"));
        }
        if self.minibatches == 0 || self.minibatches > self.num_envs {
            return Err(config_err("hyper.minibatches", "must lie in [1, num_envs]"));
        }
        Ok(())
    }
}
