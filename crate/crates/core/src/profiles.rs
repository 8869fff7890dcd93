//! Built-in run profiles.
//!
//! `paper` keeps the published 12-joint dimensions, network widths and
//! hyperparameters verbatim; it drives the kinematic stub because the planar
//! simulator has six joints. `desk` and `smoke` train the planar biped.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dwl::{Agent, Dims, Hyperparams, NetworkConfig};
use crate::env::{Environment, LocomotionEnv, StubEnv, TaskConfig};
use crate::error::{config_err, Result};
use crate::gait::QuinticConstraints;
use crate::noise::NoiseConfig;
use crate::obs::{EnvConfig, ScanGrid};
use crate::rewards::RewardWeights;
use crate::rng::RngStream;
use crate::sim::{SimConfig, TerrainProfile};

/// Stance used by the planar biped: one leg slightly forward, one back.
pub const PLANAR_POSE: [f64; 6] = [0.55, -0.8, 0.25, 0.25, -0.8, 0.55];

/// Mass ratio between the planar biped (17.2 kg) and the full robot (38 kg);
/// used to rescale force-like reward constants and the payload range.
pub const PLANAR_MASS_RATIO: f64 = 17.2 / 38.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Planar,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Policy steps per evaluation episode.
    pub episode_length: usize,
    pub terrains: Vec<TerrainProfile>,
    /// Push force magnitude during evaluation; 0 disables pushes.
    pub push_force: f64,
}

/// Everything needed to reproduce a run except the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: String,
    pub env_kind: EnvKind,
    pub updates: usize,
    pub env: EnvConfig,
    pub sim: SimConfig,
    pub task: TaskConfig,
    pub net: NetworkConfig,
    pub hyper: Hyperparams,
    pub eval: EvalConfig,
}

/// Observation/state configuration of the full 12-joint humanoid (47 / 184 dims).
pub fn paper_env() -> EnvConfig {
    EnvConfig {
        joint_count: 12,
        height_scan: ScanGrid { rows: 8, cols: 12, length: 1.1, width: 0.7 },
        command_dims: 3,
        control_rate: 100.0,
        inner_rate: 500.0,
        cycle_time: 1.0,
        nominal_pose: vec![0.0; 12],
        trajectory: QuinticConstraints::default(),
        noise: NoiseConfig::default(),
        rewards: RewardWeights::default(),
    }
}

/// Planar biped configuration: 6 joints and a single 12-point scan row.
pub fn planar_env() -> EnvConfig {
    let mut noise = NoiseConfig::default();
    noise.payload.lo *= PLANAR_MASS_RATIO;
    noise.payload.hi *= PLANAR_MASS_RATIO;
    let rewards = RewardWeights {
        target_base_height: 0.68,
        force_scale: 400.0 * PLANAR_MASS_RATIO,
        contact_threshold: 400.0 * PLANAR_MASS_RATIO,
        ..RewardWeights::default()
    };
    EnvConfig {
        joint_count: 6,
        height_scan: ScanGrid { rows: 1, cols: 12, length: 1.1, width: 0.0 },
        nominal_pose: PLANAR_POSE.to_vec(),
        noise,
        rewards,
        ..paper_env()
    }
}

pub fn paper() -> RunConfig {
    RunConfig {
        profile: "paper".to_string(),
        env_kind: EnvKind::Stub,
        updates: 10_000,
        env: paper_env(),
        sim: SimConfig::default(),
        task: TaskConfig::default(),
        net: NetworkConfig::paper(),
        hyper: Hyperparams { num_envs: 12_288, ..Hyperparams::default() },
        eval: EvalConfig {
            episodes: 10,
            episode_length: 2400,
            terrains: vec![TerrainProfile::Flat],
            push_force: 30.0,
        },
    }
}

/// Workstation-scale training of the planar biped with the published networks.
pub fn desk() -> RunConfig {
    let sim = SimConfig { terrain: TerrainProfile::irregular(0.04, 1), init_joint_noise: 0.05, ..SimConfig::default() };
    RunConfig {
        profile: "desk".to_string(),
        env_kind: EnvKind::Planar,
        updates: 3000,
        env: planar_env(),
        sim,
        task: TaskConfig { episode_length: 1000, ..TaskConfig::default() },
        net: NetworkConfig::paper(),
        hyper: Hyperparams { num_envs: 64, learning_rate: 1e-4, ..Hyperparams::default() },
        eval: EvalConfig {
            episodes: 10,
            episode_length: 1000,
            terrains: vec![
                TerrainProfile::Flat,
                TerrainProfile::slope(0.1),
                TerrainProfile::stairs(0.04, 0.3),
                TerrainProfile::irregular(0.05, 7),
            ],
            push_force: 30.0,
        },
    }
}

/// Minutes-scale run used by the training acceptance checks.
pub fn smoke() -> RunConfig {
    let sim = SimConfig { init_joint_noise: 0.05, ..SimConfig::default() };
    RunConfig {
        profile: "smoke".to_string(),
        env_kind: EnvKind::Planar,
        updates: 300,
        env: planar_env(),
        sim,
        task: TaskConfig { episode_length: 400, push_interval: 0.0, ..TaskConfig::default() },
        net: NetworkConfig {
            gru_hidden: 64,
            encoder_hidden: vec![64],
            latent: 16,
            decoder_hidden: vec![64],
            actor_hidden: vec![48],
            critic_hidden: vec![128, 128],
            baseline_hidden: vec![64, 64],
            ..NetworkConfig::paper()
        },
        hyper: Hyperparams {
            num_envs: 16,
            learning_rate: 1e-3,
            minibatches: 4,
            squared_l2: true,
            ..Hyperparams::default()
        },
        eval: EvalConfig {
            episodes: 4,
            episode_length: 400,
            terrains: vec![TerrainProfile::Flat, TerrainProfile::irregular(0.03, 7)],
            push_force: 0.0,
        },
    }
}

pub fn by_name(name: &str) -> Option<RunConfig> {
    match name {
        "paper" => Some(paper()),
        "desk" => Some(desk()),
        "smoke" => Some(smoke()),
        _ => None,
    }
}

pub const PROFILE_NAMES: [&str; 3] = ["paper", "desk", "smoke"];

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.sim.validate()?;
        self.task.validate()?;
        self.net.validate()?;
        self.hyper.validate()?;
        if self.env_kind == EnvKind::Planar && self.env.joint_count != 6 {
            return Err(config_err("env.joint_count", "the planar simulator drives exactly 6 joints"));
        }
        if self.eval.push_force < 0.0 {
            return Err(config_err("eval.push_force", "cannot be negative"));
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        Dims { obs: self.env.obs_dim(), state: self.env.state_dim(), action: self.env.joint_count }
    }

    /// A freshly initialized agent; parameters depend only on `seed`.
    pub fn build_agent(&self, seed: u64) -> Result<Agent> {
        let mut rng = RngStream::new(seed, u64::MAX);
        Agent::new(&self.net, self.dims(), self.hyper.normalize_inputs, &mut rng)
    }

    /// One environment with its own stream `(seed, index)`.
    pub fn build_env(&self, seed: u64, index: u64) -> Result<Box<dyn Environment>> {
        self.build_env_with(&self.sim, &self.task, seed, index)
    }

    pub fn build_env_with(
        &self,
        sim: &SimConfig,
        task: &TaskConfig,
        seed: u64,
        index: u64,
    ) -> Result<Box<dyn Environment>> {
        let rng = RngStream::new(seed, index);
        Ok(match self.env_kind {
            EnvKind::Planar => Box::new(LocomotionEnv::new(self.env.clone(), sim.clone(), task.clone(), rng)?),
            EnvKind::Stub => Box::new(StubEnv::new(self.env.clone(), task.episode_length, rng)?),
        })
    }

    pub fn build_envs(&self, seed: u64) -> Result<Vec<Box<dyn Environment>>> {
        (0..self.hyper.num_envs as u64).map(|i| self.build_env(seed, i)).collect()
    }
}
