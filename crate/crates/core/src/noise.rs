//! Observation model: privileged-channel masking plus domain randomization.
//!
//! Sensor channels (joint position/velocity, angular velocity, orientation)
//! receive fresh additive noise every step. Dynamics parameters (friction,
//! payload, motor offset and strength, PD factors, latency) are drawn once
//! per episode and act on the simulator rather than on the observation.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, config_err, Result};
use crate::obs::{Channel, EnvConfig, Layout, ObsVector, StateVector};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    /// `value = nominal + draw`
    Additive,
    /// `value = nominal * draw`
    Scaling,
    /// Draw is a latency in milliseconds.
    Latency,
    /// Draw replaces the nominal value.
    Resample,
}

impl Operator {
    pub fn apply(self, nominal: f64, draw: f64) -> f64 {
        match self {
            Operator::Additive => nominal + draw,
            Operator::Scaling => nominal * draw,
            Operator::Latency | Operator::Resample => draw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    PerEpisode,
    PerStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub unit: alloc::string::String,
    pub lo: f64,
    pub hi: f64,
    pub operator: Operator,
    pub frequency: Frequency,
}

impl NoiseSpec {
    fn new(unit: &str, lo: f64, hi: f64, operator: Operator, frequency: Frequency) -> Self {
        Self { unit: unit.into(), lo, hi, operator, frequency }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        rng.uniform(self.lo, self.hi)
    }

    /// The neutral draw for this operator (no perturbation).
    fn identity(&self) -> f64 {
        match self.operator {
            Operator::Scaling => 1.0,
            _ => 0.0,
        }
    }
}

/// One spec per randomized quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub joint_position: NoiseSpec,
    pub joint_velocity: NoiseSpec,
    pub angular_velocity: NoiseSpec,
    pub orientation: NoiseSpec,
    pub system_delay: NoiseSpec,
    pub friction: NoiseSpec,
    pub motor_offset: NoiseSpec,
    pub motor_strength: NoiseSpec,
    pub payload: NoiseSpec,
    pub pd_factors: NoiseSpec,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        use Frequency::*;
        use Operator::*;
        Self {
            joint_position: NoiseSpec::new("rad", -0.3, 0.3, Additive, PerStep),
            joint_velocity: NoiseSpec::new("rad/s", -1.0, 1.0, Additive, PerStep),
            angular_velocity: NoiseSpec::new("rad/s", -0.1, 0.1, Additive, PerStep),
            orientation: NoiseSpec::new("rad", -0.1, 0.1, Additive, PerStep),
            system_delay: NoiseSpec::new("ms", 0.0, 10.0, Latency, PerEpisode),
            friction: NoiseSpec::new("-", 0.2, 2.0, Resample, PerEpisode),
            motor_offset: NoiseSpec::new("rad", -0.05, 0.05, Additive, PerEpisode),
            motor_strength: NoiseSpec::new("fraction", 0.9, 1.1, Scaling, PerEpisode),
            payload: NoiseSpec::new("kg", -5.0, 20.0, Additive, PerEpisode),
            pd_factors: NoiseSpec::new("fraction", 0.8, 1.2, Scaling, PerEpisode),
        }
    }
}

impl NoiseConfig {
    /// Every range collapsed to its neutral value; friction pinned to `friction`.
    pub fn disabled(friction: f64) -> Self {
        let mut cfg = Self::default();
        for (_, spec) in cfg.rows_mut() {
            let id = spec.identity();
            spec.lo = id;
            spec.hi = id;
        }
        cfg.friction.lo = friction;
        cfg.friction.hi = friction;
        cfg
    }

    pub fn rows(&self) -> [(&'static str, &NoiseSpec); 10] {
        [
            ("joint_position", &self.joint_position),
            ("joint_velocity", &self.joint_velocity),
            ("angular_velocity", &self.angular_velocity),
            ("orientation", &self.orientation),
            ("system_delay", &self.system_delay),
            ("friction", &self.friction),
            ("motor_offset", &self.motor_offset),
            ("motor_strength", &self.motor_strength),
            ("payload", &self.payload),
            ("pd_factors", &self.pd_factors),
        ]
    }

    fn rows_mut(&mut self) -> [(&'static str, &mut NoiseSpec); 10] {
        [
            ("joint_position", &mut self.joint_position),
            ("joint_velocity", &mut self.joint_velocity),
            ("angular_velocity", &mut self.angular_velocity),
            ("orientation", &mut self.orientation),
            ("system_delay", &mut self.system_delay),
            ("friction", &mut self.friction),
            ("motor_offset", &mut self.motor_offset),
            ("motor_strength", &mut self.motor_strength),
            ("payload", &mut self.payload),
            ("pd_factors", &mut self.pd_factors),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, spec) in self.rows() {
            if !(spec.lo.is_finite() && spec.hi.is_finite()) || spec.lo > spec.hi {
                return Err(config_err("env.noise", alloc::format!("{name}: need finite lo <= hi")));
            }
            if spec.operator == Operator::Scaling && spec.lo <= 0.0 {
                return Err(config_err("env.noise", alloc::format!("{name}: scaling range must be positive")));
            }
        }
        for (name, spec) in &self.rows()[..4] {
            if spec.frequency != Frequency::PerStep || spec.operator != Operator::Additive {
                return Err(config_err("env.noise", alloc::format!("{name}: sensor noise must be additive per-step")));
            }
        }
        for (name, spec) in &self.rows()[4..] {
            if spec.frequency != Frequency::PerEpisode {
                return Err(config_err("env.noise", alloc::format!("{name}: dynamics noise is drawn per episode")));
            }
        }
        if self.system_delay.lo < 0.0 {
            return Err(config_err("env.noise.system_delay", "latency cannot be negative"));
        }
        if self.friction.lo < 0.0 {
            return Err(config_err("env.noise.friction", "friction cannot be negative"));
        }
        Ok(())
    }
}

/// Per-episode draws. Values are raw draws; combine with nominal robot
/// parameters through [`Operator::apply`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedDynamics {
    pub friction: f64,
    pub motor_offset: Vec<f64>,
    pub motor_strength: f64,
    pub payload: f64,
    /// Multipliers on (Kp, Kd).
    pub pd_factors: (f64, f64),
    pub system_delay_ms: f64,
}

impl RandomizedDynamics {
    pub fn nominal(joint_count: usize, friction: f64) -> Self {
        Self {
            friction,
            motor_offset: alloc::vec![0.0; joint_count],
            motor_strength: 1.0,
            payload: 0.0,
            pd_factors: (1.0, 1.0),
            system_delay_ms: 0.0,
        }
    }
}

/// Draw order is fixed so that a stream replays identically.
pub fn sample_dynamics(rng: &mut RngStream, specs: &NoiseConfig, joint_count: usize) -> RandomizedDynamics {
    let friction = specs.friction.sample(rng);
    let motor_offset = (0..joint_count).map(|_| specs.motor_offset.sample(rng)).collect();
    let motor_strength = specs.motor_strength.sample(rng);
    let payload = specs.payload.sample(rng);
    let kp = specs.pd_factors.sample(rng);
    let kd = specs.pd_factors.sample(rng);
    let system_delay_ms = specs.system_delay.sample(rng);
    RandomizedDynamics { friction, motor_offset, motor_strength, payload, pd_factors: (kp, kd), system_delay_ms }
}

/// Drops privileged channels and perturbs the proprioceptive ones.
pub fn corrupt_observation(state: &StateVector, rng: &mut RngStream, cfg: &EnvConfig) -> Result<ObsVector> {
    check_len("state vector", cfg.state_dim(), state.0.len())?;
    let layout = Layout::observation(cfg);
    let mut obs = state.0[..layout.len()].to_vec();
    let noise = &cfg.noise;
    for (ch, spec) in [
        (Channel::JointPosition, &noise.joint_position),
        (Channel::JointVelocity, &noise.joint_velocity),
        (Channel::AngularVelocity, &noise.angular_velocity),
        (Channel::Orientation, &noise.orientation),
    ] {
        if let Some(r) = layout.range(ch) {
            for x in &mut obs[r] {
                *x = spec.operator.apply(*x, spec.sample(rng));
            }
        }
    }
    Ok(ObsVector(obs))
}

/// Whole inner steps covered by a latency, rounded down.
pub fn delay_steps(delay_ms: f64, inner_dt: f64) -> usize {
    let steps = delay_ms * 1e-3 / inner_dt;
    libm::floor(steps + 1e-9).max(0.0) as usize
}

/// `history` is ordered oldest first, newest last. Returns the entry that was
/// current `delay_ms` ago, or the oldest available one.
pub fn apply_delay<'a>(history: &'a [Vec<f64>], delay_ms: f64, inner_dt: f64) -> &'a [f64] {
    let k = delay_steps(delay_ms, inner_dt);
    let idx = history.len().saturating_sub(1 + k);
    &history[idx]
}
