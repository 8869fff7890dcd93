//! Locomotion reward terms and their weighted sum.
//!
//! Tracking terms use the kernel `phi(e, w) = exp(-w * |e|^2)`; penalty terms
//! carry negative weights. The total is `sum_i r_i * mu_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::{FootReference, StanceMask};
use crate::obs::Command;

/// Number of reward terms.
pub const TERM_COUNT: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardTerm {
    LinVelTracking,
    AngVelTracking,
    Orientation,
    BaseHeight,
    PeriodicForce,
    PeriodicVelocity,
    FootHeight,
    FootVel,
    DefaultJoint,
    Energy,
    ActionSmoothness,
    FeetMovements,
    LargeContact,
}

impl RewardTerm {
    pub const ALL: [RewardTerm; TERM_COUNT] = [
        RewardTerm::LinVelTracking,
        RewardTerm::AngVelTracking,
        RewardTerm::Orientation,
        RewardTerm::BaseHeight,
        RewardTerm::PeriodicForce,
        RewardTerm::PeriodicVelocity,
        RewardTerm::FootHeight,
        RewardTerm::FootVel,
        RewardTerm::DefaultJoint,
        RewardTerm::Energy,
        RewardTerm::ActionSmoothness,
        RewardTerm::FeetMovements,
        RewardTerm::LargeContact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RewardTerm::LinVelTracking => "lin_vel_tracking",
            RewardTerm::AngVelTracking => "ang_vel_tracking",
            RewardTerm::Orientation => "orientation",
            RewardTerm::BaseHeight => "base_height",
            RewardTerm::PeriodicForce => "periodic_force",
            RewardTerm::PeriodicVelocity => "periodic_velocity",
            RewardTerm::FootHeight => "foot_height",
            RewardTerm::FootVel => "foot_vel",
            RewardTerm::DefaultJoint => "default_joint",
            RewardTerm::Energy => "energy",
            RewardTerm::ActionSmoothness => "action_smoothness",
            RewardTerm::FeetMovements => "feet_movements",
            RewardTerm::LargeContact => "large_contact",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub lin_vel_tracking: f64,
    pub ang_vel_tracking: f64,
    pub orientation: f64,
    pub base_height: f64,
    pub periodic_force: f64,
    pub periodic_velocity: f64,
    pub foot_height: f64,
    pub foot_vel: f64,
    pub default_joint: f64,
    pub energy: f64,
    pub action_smoothness: f64,
    pub feet_movements: f64,
    pub large_contact: f64,
    /// Base height target in meters.
    pub target_base_height: f64,
    /// Stance-foot force normalizer (N); forces are divided by this then clipped to [0, 1].
    pub force_scale: f64,
    /// Swing-foot speed normalizer (m/s). Not published; exposed for tuning.
    pub velocity_scale: f64,
    /// Contact forces above this (N) are penalized.
    pub contact_threshold: f64,
    /// Upper clip of the excess-contact penalty (N).
    pub contact_clip: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            lin_vel_tracking: 1.0,
            ang_vel_tracking: 1.0,
            orientation: 1.0,
            base_height: 0.5,
            periodic_force: 1.0,
            periodic_velocity: 1.0,
            foot_height: 1.0,
            foot_vel: 0.5,
            default_joint: 0.2,
            energy: -0.0001,
            action_smoothness: -0.01,
            feet_movements: -0.01,
            large_contact: -0.01,
            target_base_height: 0.7,
            force_scale: 400.0,
            velocity_scale: 2.0,
            contact_threshold: 400.0,
            contact_clip: 100.0,
        }
    }
}

impl RewardWeights {
    pub fn weight(&self, term: RewardTerm) -> f64 {
        match term {
            RewardTerm::LinVelTracking => self.lin_vel_tracking,
            RewardTerm::AngVelTracking => self.ang_vel_tracking,
            RewardTerm::Orientation => self.orientation,
            RewardTerm::BaseHeight => self.base_height,
            RewardTerm::PeriodicForce => self.periodic_force,
            RewardTerm::PeriodicVelocity => self.periodic_velocity,
            RewardTerm::FootHeight => self.foot_height,
            RewardTerm::FootVel => self.foot_vel,
            RewardTerm::DefaultJoint => self.default_joint,
            RewardTerm::Energy => self.energy,
            RewardTerm::ActionSmoothness => self.action_smoothness,
            RewardTerm::FeetMovements => self.feet_movements,
            RewardTerm::LargeContact => self.large_contact,
        }
    }

    /// Multiplies every term weight (not the shaping constants) by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut w = self.clone();
        for v in [
            &mut w.lin_vel_tracking,
            &mut w.ang_vel_tracking,
            &mut w.orientation,
            &mut w.base_height,
            &mut w.periodic_force,
            &mut w.periodic_velocity,
            &mut w.foot_height,
            &mut w.foot_vel,
            &mut w.default_joint,
            &mut w.energy,
            &mut w.action_smoothness,
            &mut w.feet_movements,
            &mut w.large_contact,
        ] {
            *v *= k;
        }
        w
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = RewardTerm::ALL.iter().all(|t| self.weight(*t).is_finite());
        if !all_finite {
            return Err(crate::error::config_err("rewards", "weights must be finite"));
        }
        if !(self.target_base_height > 0.0) {
            return Err(crate::error::config_err("rewards.target_base_height", "must be positive"));
        }
        if !(self.force_scale > 0.0) || !(self.velocity_scale > 0.0) {
            return Err(crate::error::config_err("rewards.force_scale", "scales must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub raw: [f64; TERM_COUNT],
    pub weighted: [f64; TERM_COUNT],
    pub total: f64,
}

impl RewardBreakdown {
    pub fn from_raw(raw: [f64; TERM_COUNT], weights: &RewardWeights) -> Self {
        let mut weighted = [0.0; TERM_COUNT];
        let mut total = 0.0;
        for (i, term) in RewardTerm::ALL.iter().enumerate() {
            weighted[i] = raw[i] * weights.weight(*term);
            total += weighted[i];
        }
        Self { raw, weighted, total }
    }

    pub fn raw_of(&self, term: RewardTerm) -> f64 {
        self.raw[term as usize]
    }

    pub fn weighted_of(&self, term: RewardTerm) -> f64 {
        self.weighted[term as usize]
    }
}

/// `exp(-w * |e|^2)`.
pub fn phi(error: &[f64], w: f64) -> f64 {
    let sq: f64 = error.iter().map(|e| e * e).sum();
    libm::exp(-w * sq)
}

fn unit_clip(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

pub fn periodic_force_reward(mask: StanceMask, force: [f64; 2], force_scale: f64) -> f64 {
    let [il, ir] = mask.as_array();
    il * unit_clip(force[0] / force_scale) + ir * unit_clip(force[1] / force_scale)
}

pub fn periodic_velocity_reward(mask: StanceMask, speed: [f64; 2], velocity_scale: f64) -> f64 {
    let [il, ir] = mask.as_array();
    (1.0 - il) * unit_clip(speed[0] / velocity_scale) + (1.0 - ir) * unit_clip(speed[1] / velocity_scale)
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    libm::sqrt(v.map(|x| x * x).sum::<f64>())
}

/// Everything the reward needs from one control step.
#[derive(Debug, Clone, Copy)]
pub struct RewardInputs<'a> {
    /// World-frame base linear velocity (x, y, z).
    pub base_lin_vel: [f64; 3],
    /// Base angular velocity (roll, pitch, yaw rates).
    pub base_ang_vel: [f64; 3],
    /// Roll, pitch, yaw.
    pub orientation: [f64; 3],
    /// Base height above the terrain below it.
    pub base_height: f64,
    pub command: Command,
    pub stance: StanceMask,
    /// Normal contact force per foot (N).
    pub foot_force: [f64; 2],
    /// Foot speed magnitude per foot (m/s).
    pub foot_speed: [f64; 2],
    /// Sole height above terrain per foot.
    pub foot_height: [f64; 2],
    pub foot_vel_z: [f64; 2],
    pub foot_acc_z: [f64; 2],
    pub reference: Option<FootReference>,
    pub joint_pos: &'a [f64],
    pub joint_vel: &'a [f64],
    pub torques: &'a [f64],
    pub nominal_pose: &'a [f64],
    /// `a_t`, `a_{t-1}`, `a_{t-2}`.
    pub actions: [&'a [f64]; 3],
}

pub fn step_reward(inp: &RewardInputs<'_>, weights: &RewardWeights) -> Result<RewardBreakdown> {
    let reference = inp.reference.ok_or(Error::MissingInput("foot reference trajectory"))?;
    let n = inp.joint_pos.len();
    for (ctx, len) in [
        ("joint velocity", inp.joint_vel.len()),
        ("torques", inp.torques.len()),
        ("nominal pose", inp.nominal_pose.len()),
        ("action t", inp.actions[0].len()),
        ("action t-1", inp.actions[1].len()),
        ("action t-2", inp.actions[2].len()),
    ] {
        crate::error::check_len(ctx, n, len)?;
    }

    let cmd = &inp.command;
    // Vertical velocity, roll and pitch rates are always commanded to zero.
    let lin_err = [inp.base_lin_vel[0] - cmd.vx, inp.base_lin_vel[1] - cmd.vy, inp.base_lin_vel[2]];
    let ang_err = [inp.base_ang_vel[0], inp.base_ang_vel[1], inp.base_ang_vel[2] - cmd.yaw_rate];
    let href = reference.heights();
    let vref = reference.velocities();
    let foot_h_err = [inp.foot_height[0] - href[0], inp.foot_height[1] - href[1]];
    let foot_v_err = [inp.foot_vel_z[0] - vref[0], inp.foot_vel_z[1] - vref[1]];

    let mut raw = [0.0; TERM_COUNT];
    raw[RewardTerm::LinVelTracking as usize] = phi(&lin_err, 5.0);
    raw[RewardTerm::AngVelTracking as usize] = phi(&ang_err, 7.0);
    raw[RewardTerm::Orientation as usize] = phi(&inp.orientation[..2], 5.0);
    raw[RewardTerm::BaseHeight as usize] = phi(&[inp.base_height - weights.target_base_height], 10.0);
    raw[RewardTerm::PeriodicForce as usize] = periodic_force_reward(inp.stance, inp.foot_force, weights.force_scale);
    raw[RewardTerm::PeriodicVelocity as usize] =
        periodic_velocity_reward(inp.stance, inp.foot_speed, weights.velocity_scale);
    raw[RewardTerm::FootHeight as usize] = phi(&foot_h_err, 5.0);
    raw[RewardTerm::FootVel as usize] = phi(&foot_v_err, 3.0);

    let mut joint_err_sq = 0.0;
    let mut energy = 0.0;
    let mut smooth_sq = 0.0;
    for j in 0..n {
        let e = inp.joint_pos[j] - inp.nominal_pose[j];
        joint_err_sq += e * e;
        energy += libm::fabs(inp.torques[j]) * libm::fabs(inp.joint_vel[j]);
        let s = inp.actions[0][j] - 2.0 * inp.actions[1][j] + inp.actions[2][j];
        smooth_sq += s * s;
    }
    raw[RewardTerm::DefaultJoint as usize] = libm::exp(-2.0 * joint_err_sq);
    raw[RewardTerm::Energy as usize] = energy;
    raw[RewardTerm::ActionSmoothness as usize] = libm::sqrt(smooth_sq);
    raw[RewardTerm::FeetMovements as usize] =
        norm(inp.foot_vel_z.iter().copied()) + norm(inp.foot_acc_z.iter().copied());
    raw[RewardTerm::LargeContact as usize] = inp
        .foot_force
        .iter()
        .map(|f| (f - weights.contact_threshold).clamp(0.0, weights.contact_clip))
        .sum();

    Ok(RewardBreakdown::from_raw(raw, weights))
}
