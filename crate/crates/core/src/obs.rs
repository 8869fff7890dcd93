//! Observation and privileged state vectors.
//!
//! Both vectors are flat `f64` arrays with a fixed channel order. The
//! observation is exactly the leading block of the state:
//!
//! | channel           | dims | obs | state |
//! |-------------------|------|-----|-------|
//! | clock input       | 2    | x   | x     |
//! | commands          | 3    | x   | x     |
//! | joint position    | J    | x   | x     |
//! | joint velocity    | J    | x   | x     |
//! | angular velocity  | 3    | x   | x     |
//! | orientation       | 3    | x   | x     |
//! | last actions      | J    | x   | x     |
//! | base linear vel.  | 3    |     | x     |
//! | friction          | 1    |     | x     |
//! | push force/torque | 6    |     | x     |
//! | cycle time        | 1    |     | x     |
//! | stance mask       | 2    |     | x     |
//! | feet movement     | 12   |     | x     |
//! | feet contact      | 2    |     | x     |
//! | body mass         | 1    |     | x     |
//! | current reward    | 1    |     | x     |
//! | torques           | J    |     | x     |
//! | height scan       | H    |     | x     |

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::gait::{stance_mask, GaitClock, QuinticConstraints};
use crate::noise::{corrupt_observation, NoiseConfig};
use crate::rewards::RewardWeights;
use crate::rng::RngStream;

/// Velocity command: forward, lateral (m/s) and yaw rate (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
}

impl Command {
    pub fn as_array(&self) -> [f64; 3] {
        [self.vx, self.vy, self.yaw_rate]
    }
}

/// Rectangular height-scan grid centred on the base. `rows` lateral lines by
/// `cols` samples along the walking direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanGrid {
    pub rows: usize,
    pub cols: usize,
    /// Forward extent (m), samples span `[-length/2, length/2]`.
    pub length: f64,
    /// Lateral extent (m). Unused by the planar simulator beyond bookkeeping.
    pub width: f64,
}

impl ScanGrid {
    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    /// Forward offsets of each sample, row-major.
    pub fn x_offsets(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count());
        for _ in 0..self.rows {
            for c in 0..self.cols {
                let x = if self.cols == 1 {
                    0.0
                } else {
                    -0.5 * self.length + self.length * c as f64 / (self.cols - 1) as f64
                };
                out.push(x);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub joint_count: usize,
    pub height_scan: ScanGrid,
    pub command_dims: usize,
    /// Policy rate (Hz).
    pub control_rate: f64,
    /// PD / integrator rate (Hz).
    pub inner_rate: f64,
    /// Full gait cycle (s).
    pub cycle_time: f64,
    /// Nominal standing joint angles; also the default-joint reward target.
    pub nominal_pose: Vec<f64>,
    pub trajectory: QuinticConstraints,
    pub noise: NoiseConfig,
    pub rewards: RewardWeights,
}

impl EnvConfig {
    pub fn height_scan_count(&self) -> usize {
        self.height_scan.count()
    }

    pub fn obs_dim(&self) -> usize {
        obs_dim_for(self.joint_count)
    }

    pub fn state_dim(&self) -> usize {
        state_dim_for(self.joint_count, self.height_scan_count())
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_rate
    }

    pub fn inner_dt(&self) -> f64 {
        1.0 / self.inner_rate
    }

    /// Number of inner integration steps per policy step.
    pub fn substeps(&self) -> usize {
        libm::round(self.inner_rate / self.control_rate) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.joint_count == 0 {
            return Err(config_err("env.joint_count", "must be at least 1"));
        }
        if self.command_dims != 3 {
            return Err(config_err("env.command_dims", "must be 3 (vx, vy, yaw rate)"));
        }
        if self.nominal_pose.len() != self.joint_count {
            return Err(config_err(
                "env.nominal_pose",
                format!("expected {} entries, found {}", self.joint_count, self.nominal_pose.len()),
            ));
        }
        if !(self.control_rate > 0.0) || !(self.inner_rate >= self.control_rate) {
            return Err(config_err("env.inner_rate", "rates must be positive with inner_rate >= control_rate"));
        }
        let ratio = self.inner_rate / self.control_rate;
        if libm::fabs(ratio - libm::round(ratio)) > 1e-9 {
            return Err(config_err("env.inner_rate", "must be an integer multiple of control_rate"));
        }
        if !(self.cycle_time > 0.0) {
            return Err(config_err("env.cycle_time", "must be positive"));
        }
        if !(self.trajectory.duration > 0.0) {
            return Err(config_err("env.trajectory.duration", "must be positive"));
        }
        self.noise.validate()?;
        self.rewards.validate()
    }
}

pub fn obs_dim_for(joint_count: usize) -> usize {
    2 + 3 + 2 * joint_count + 3 + 3 + joint_count
}

pub fn state_dim_for(joint_count: usize, height_scan_count: usize) -> usize {
    obs_dim_for(joint_count) + 3 + 1 + 6 + 1 + 2 + 12 + 2 + 1 + 1 + joint_count + height_scan_count
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    ClockInput,
    Commands,
    JointPosition,
    JointVelocity,
    AngularVelocity,
    Orientation,
    LastActions,
    BaseLinearVelocity,
    Friction,
    PushWrench,
    CycleTime,
    StanceMask,
    FeetMovement,
    FeetContact,
    BodyMass,
    CurrentReward,
    Torques,
    HeightScan,
}

impl Channel {
    pub const OBSERVED: [Channel; 7] = [
        Channel::ClockInput,
        Channel::Commands,
        Channel::JointPosition,
        Channel::JointVelocity,
        Channel::AngularVelocity,
        Channel::Orientation,
        Channel::LastActions,
    ];

    pub const PRIVILEGED: [Channel; 11] = [
        Channel::BaseLinearVelocity,
        Channel::Friction,
        Channel::PushWrench,
        Channel::CycleTime,
        Channel::StanceMask,
        Channel::FeetMovement,
        Channel::FeetContact,
        Channel::BodyMass,
        Channel::CurrentReward,
        Channel::Torques,
        Channel::HeightScan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::ClockInput => "clock",
            Channel::Commands => "command",
            Channel::JointPosition => "joint_pos",
            Channel::JointVelocity => "joint_vel",
            Channel::AngularVelocity => "ang_vel",
            Channel::Orientation => "orientation",
            Channel::LastActions => "last_action",
            Channel::BaseLinearVelocity => "base_lin_vel",
            Channel::Friction => "friction",
            Channel::PushWrench => "push",
            Channel::CycleTime => "cycle_time",
            Channel::StanceMask => "stance_mask",
            Channel::FeetMovement => "feet_movement",
            Channel::FeetContact => "feet_contact",
            Channel::BodyMass => "body_mass",
            Channel::CurrentReward => "current_reward",
            Channel::Torques => "torques",
            Channel::HeightScan => "height_scan",
        }
    }

    pub fn dim(self, joint_count: usize, height_scan_count: usize) -> usize {
        match self {
            Channel::ClockInput | Channel::StanceMask | Channel::FeetContact => 2,
            Channel::Commands | Channel::AngularVelocity | Channel::Orientation | Channel::BaseLinearVelocity => 3,
            Channel::JointPosition | Channel::JointVelocity | Channel::LastActions | Channel::Torques => joint_count,
            Channel::Friction | Channel::CycleTime | Channel::BodyMass | Channel::CurrentReward => 1,
            Channel::PushWrench => 6,
            Channel::FeetMovement => 12,
            Channel::HeightScan => height_scan_count,
        }
    }
}

/// Offsets of each channel inside a flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    entries: Vec<(Channel, usize, usize)>,
    len: usize,
}

impl Layout {
    fn build(channels: &[Channel], joint_count: usize, scan: usize) -> Self {
        let mut entries = Vec::with_capacity(channels.len());
        let mut offset = 0;
        for &ch in channels {
            let d = ch.dim(joint_count, scan);
            entries.push((ch, offset, d));
            offset += d;
        }
        Self { entries, len: offset }
    }

    pub fn observation(cfg: &EnvConfig) -> Self {
        Self::build(&Channel::OBSERVED, cfg.joint_count, cfg.height_scan_count())
    }

    pub fn state(cfg: &EnvConfig) -> Self {
        let mut all = Vec::from(Channel::OBSERVED);
        all.extend_from_slice(&Channel::PRIVILEGED);
        Self::build(&all, cfg.joint_count, cfg.height_scan_count())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channels(&self) -> impl Iterator<Item = (Channel, core::ops::Range<usize>)> + '_ {
        self.entries.iter().map(|&(c, o, d)| (c, o..o + d))
    }

    pub fn range(&self, ch: Channel) -> Option<core::ops::Range<usize>> {
        self.entries.iter().find(|e| e.0 == ch).map(|&(_, o, d)| o..o + d)
    }

    /// One column name per scalar, e.g. `joint_pos_3`.
    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len);
        for &(ch, _, d) in &self.entries {
            if d == 1 {
                out.push(String::from(ch.name()));
            } else {
                for i in 0..d {
                    out.push(format!("{}_{}", ch.name(), i));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct ObsVector(pub Vec<f64>);

impl StateVector {
    pub fn channel<'a>(&'a self, layout: &Layout, ch: Channel) -> &'a [f64] {
        match layout.range(ch) {
            Some(r) => &self.0[r],
            None => &[],
        }
    }
}

impl ObsVector {
    pub fn channel<'a>(&'a self, layout: &Layout, ch: Channel) -> &'a [f64] {
        match layout.range(ch) {
            Some(r) => &self.0[r],
            None => &[],
        }
    }
}

/// Ground-truth quantities reported by a simulator for one policy step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTruth {
    pub joint_pos: Vec<f64>,
    pub joint_vel: Vec<f64>,
    pub torques: Vec<f64>,
    /// Roll, pitch, yaw rates.
    pub base_ang_vel: [f64; 3],
    /// Roll, pitch, yaw.
    pub orientation: [f64; 3],
    pub base_lin_vel: [f64; 3],
    pub friction: f64,
    /// Force (x, y, z) then torque (x, y, z) currently applied to the trunk.
    pub push_wrench: [f64; 6],
    /// Left foot position (3) and velocity (3), then the right foot.
    pub feet_movement: [f64; 12],
    pub feet_contact: [bool; 2],
    pub body_mass: f64,
    /// Terrain height minus base height at each grid point.
    pub height_scan: Vec<f64>,
}

pub fn assemble_state(
    truth: &SimTruth,
    clock: &GaitClock,
    command: &Command,
    last_action: &[f64],
    current_reward: f64,
    cfg: &EnvConfig,
) -> Result<StateVector> {
    let j = cfg.joint_count;
    for (name, len, want) in [
        ("joint_pos", truth.joint_pos.len(), j),
        ("joint_vel", truth.joint_vel.len(), j),
        ("torques", truth.torques.len(), j),
        ("last_action", last_action.len(), j),
        ("height_scan", truth.height_scan.len(), cfg.height_scan_count()),
    ] {
        if len != want {
            return Err(Error::MissingChannel(name));
        }
    }
    let mut v = Vec::with_capacity(cfg.state_dim());
    v.extend_from_slice(&clock.clock_signal());
    v.extend_from_slice(&command.as_array());
    v.extend_from_slice(&truth.joint_pos);
    v.extend_from_slice(&truth.joint_vel);
    v.extend_from_slice(&truth.base_ang_vel);
    v.extend_from_slice(&truth.orientation);
    v.extend_from_slice(last_action);
    v.extend_from_slice(&truth.base_lin_vel);
    v.push(truth.friction);
    v.extend_from_slice(&truth.push_wrench);
    v.push(clock.cycle_time);
    v.extend_from_slice(&stance_mask(clock).as_array());
    v.extend_from_slice(&truth.feet_movement);
    v.extend(truth.feet_contact.iter().map(|&c| f64::from(u8::from(c))));
    v.push(truth.body_mass);
    v.push(current_reward);
    v.extend_from_slice(&truth.torques);
    v.extend_from_slice(&truth.height_scan);
    debug_assert_eq!(v.len(), cfg.state_dim());
    Ok(StateVector(v))
}

pub fn assemble_observation(state: &StateVector, rng: &mut RngStream, cfg: &EnvConfig) -> Result<ObsVector> {
    corrupt_observation(state, rng, cfg)
}
