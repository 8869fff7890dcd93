//! Planar biped simulator: trunk plus two hip/knee/ankle legs, PD inner loop,
//! penalty contact with stick-slip friction, terrain and external pushes.

mod model;
mod terrain;

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use model::{LinkParams, PointKinematics, PointSpec, RobotModel, FOOT_L, FOOT_R, NJ, NLINKS, NQ, TRUNK};
pub use terrain::TerrainProfile;

use crate::error::{config_err, Result};
use crate::linalg::solve_in_place;
use crate::noise::{apply_delay, delay_steps, RandomizedDynamics};
use crate::obs::ScanGrid;

/// Per-joint PD gains and torque saturation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
    pub limit: f64,
}

/// `tau = strength * (kp * (target + offset - pos) - kd * vel)`, clamped to `[-limit, limit]`.
pub fn pd_torque(target: &[f64], pos: &[f64], vel: &[f64], gains: &[PdGains], strength: f64, offsets: &[f64]) -> Vec<f64> {
    debug_assert!(pos.len() == target.len() && vel.len() == target.len());
    (0..target.len())
        .map(|j| {
            let g = gains[j];
            let off = offsets.get(j).copied().unwrap_or(0.0);
            let tau = strength * (g.kp * (target[j] + off - pos[j]) - g.kd * vel[j]);
            tau.clamp(-g.limit, g.limit)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub robot: RobotModel,
    pub terrain: TerrainProfile,
    /// Fall when base height drops below this fraction of the nominal height.
    pub fall_height_ratio: f64,
    /// Fall when |pitch| exceeds this (rad).
    pub max_pitch: f64,
    /// Any generalized speed beyond this counts as numerical blow-up.
    pub max_speed: f64,
    /// Uniform half-width of the initial joint-angle perturbation (rad).
    pub init_joint_noise: f64,
    /// Stiffness of the soft joint-limit stops (N m / rad).
    pub limit_stiffness: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            robot: RobotModel::default(),
            terrain: TerrainProfile::Flat,
            fall_height_ratio: 0.3,
            max_pitch: 1.0,
            max_speed: 100.0,
            init_joint_noise: 0.0,
            limit_stiffness: 500.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.robot.validate()?;
        if !(self.fall_height_ratio >= 0.0 && self.fall_height_ratio < 1.0) {
            return Err(config_err("sim.fall_height_ratio", "must lie in [0, 1)"));
        }
        if !(self.max_pitch > 0.0) {
            return Err(config_err("sim.max_pitch", "must be positive"));
        }
        if !(self.max_speed > 0.0) {
            return Err(config_err("sim.max_speed", "must be positive"));
        }
        if self.init_joint_noise < 0.0 {
            return Err(config_err("sim.init_joint_noise", "cannot be negative"));
        }
        Ok(())
    }
}

/// An external wrench on the trunk center of mass over `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Push {
    pub force: [f64; 2],
    pub torque: f64,
    pub start: f64,
    pub end: f64,
}

impl Push {
    pub fn active(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Running,
    Fell,
    /// Non-finite or runaway state.
    Diverged,
}

/// Ground truth after one policy step.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub time: f64,
    pub q: [f64; NQ],
    pub qd: [f64; NQ],
    pub torques: [f64; NJ],
    /// Sole positions (x, z) and velocities (vx, vz) per foot.
    pub foot_pos: [[f64; 2]; 2],
    pub foot_vel: [[f64; 2]; 2],
    /// Sole height above the terrain directly below.
    pub foot_clearance: [f64; 2],
    /// Vertical sole acceleration averaged over the last policy step.
    pub foot_acc_z: [f64; 2],
    pub foot_contact: [bool; 2],
    /// Summed normal force of heel and toe.
    pub foot_force: [f64; 2],
    /// Force (x, y, z) then torque (x, y, z) active at `time`.
    pub push_wrench: [f64; 6],
    pub base_height: f64,
    pub termination: Termination,
}

impl SimState {
    pub fn joint_pos(&self) -> &[f64] {
        &self.q[3..]
    }

    pub fn joint_vel(&self) -> &[f64] {
        &self.qd[3..]
    }

    pub fn pitch(&self) -> f64 {
        self.q[2]
    }
}

#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    inner_dt: f64,
    substeps: usize,
    dynamics: RandomizedDynamics,
    trunk_mass: f64,
    nominal_height: f64,
    q: [f64; NQ],
    qd: [f64; NQ],
    time: f64,
    torques: [f64; NJ],
    anchors: [Option<[f64; 2]>; 4],
    normal: [f64; 4],
    penetrating: [bool; 4],
    history: VecDeque<Vec<f64>>,
    pushes: Vec<Push>,
    termination: Termination,
    foot_vz_prev: [f64; 2],
    foot_acc_z: [f64; 2],
}

impl Simulator {
    /// Places the robot in `pose` (joint angles, zero pitch) with its lowest
    /// contact point resting on the terrain at `x = 0`.
    pub fn new(cfg: SimConfig, pose: &[f64; NJ], dynamics: RandomizedDynamics, inner_dt: f64, substeps: usize) -> Result<Self> {
        cfg.validate()?;
        if !(inner_dt > 0.0) || substeps == 0 {
            return Err(config_err("env.inner_rate", "inner step must be positive"));
        }
        if dynamics.motor_offset.len() != NJ {
            return Err(config_err("env.joint_count", "planar simulator drives exactly 6 joints"));
        }
        let trunk_mass = (cfg.robot.trunk_mass + dynamics.payload).max(0.1 * cfg.robot.trunk_mass);
        let nominal_height = cfg.robot.standing_height(pose);
        let mut sim = Self {
            cfg,
            inner_dt,
            substeps,
            dynamics,
            trunk_mass,
            nominal_height,
            q: [0.0; NQ],
            qd: [0.0; NQ],
            time: 0.0,
            torques: [0.0; NJ],
            anchors: [None; 4],
            normal: [0.0; 4],
            penetrating: [false; 4],
            history: VecDeque::new(),
            pushes: Vec::new(),
            termination: Termination::Running,
            foot_vz_prev: [0.0; 2],
            foot_acc_z: [0.0; 2],
        };
        sim.place(pose);
        Ok(sim)
    }

    fn place(&mut self, pose: &[f64; NJ]) {
        self.q = [0.0; NQ];
        self.q[3..].copy_from_slice(pose);
        let zero = [0.0; NQ];
        // Rest the lowest contact point on the ground beneath it.
        let mut lift = f64::MIN;
        for p in self.cfg.robot.contact_points() {
            let pos = self.cfg.robot.point(&self.q, &zero, p).pos;
            lift = lift.max(self.cfg.terrain.height(pos[0]) - pos[1]);
        }
        self.q[1] = lift;
        self.qd = [0.0; NQ];
        self.history.clear();
        self.history.push_back(pose.to_vec());
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn dynamics(&self) -> &RandomizedDynamics {
        &self.dynamics
    }

    pub fn nominal_height(&self) -> f64 {
        self.nominal_height
    }

    pub fn body_mass(&self) -> f64 {
        self.cfg.robot.total_mass() - self.cfg.robot.trunk_mass + self.trunk_mass
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn q(&self) -> &[f64; NQ] {
        &self.q
    }

    pub fn qd(&self) -> &[f64; NQ] {
        &self.qd
    }

    /// Overwrites the generalized state; contact anchors are cleared.
    pub fn set_state(&mut self, q: [f64; NQ], qd: [f64; NQ]) {
        self.q = q;
        self.qd = qd;
        self.anchors = [None; 4];
    }

    pub fn energy(&self) -> f64 {
        self.cfg.robot.energy(&self.q, &self.qd, self.trunk_mass)
    }

    /// Schedules a trunk wrench starting now.
    pub fn apply_push(&mut self, force: [f64; 2], torque: f64, duration: f64) -> Result<Push> {
        if !(duration > 0.0) {
            return Err(config_err("push.duration", "must be positive"));
        }
        let push = Push { force, torque, start: self.time, end: self.time + duration };
        self.pushes.push(push);
        Ok(push)
    }

    fn wrench_at(&self, t: f64) -> ([f64; 2], f64) {
        let mut f = [0.0; 2];
        let mut tau = 0.0;
        for p in self.pushes.iter().filter(|p| p.active(t)) {
            f[0] += p.force[0];
            f[1] += p.force[1];
            tau += p.torque;
        }
        (f, tau)
    }

    pub fn base_height(&self) -> f64 {
        self.q[1] - self.cfg.terrain.height(self.q[0])
    }

    /// Terrain height minus base height at every grid sample.
    pub fn height_scan(&self, grid: &ScanGrid) -> Vec<f64> {
        height_scan(&self.cfg.terrain, self.q[0], self.q[1], grid)
    }

    fn gains(&self) -> [PdGains; NJ] {
        let r = &self.cfg.robot;
        let kp = RobotModel::per_joint(&r.kp);
        let kd = RobotModel::per_joint(&r.kd);
        let lim = RobotModel::per_joint(&r.torque_limit);
        let (fp, fd) = self.dynamics.pd_factors;
        core::array::from_fn(|j| PdGains { kp: kp[j] * fp, kd: kd[j] * fd, limit: lim[j] })
    }

    /// Advances one policy step (all substeps) toward joint `targets`.
    pub fn step(&mut self, targets: &[f64]) -> SimState {
        debug_assert_eq!(targets.len(), NJ);
        let lower = RobotModel::per_joint(&self.cfg.robot.joint_lower);
        let upper = RobotModel::per_joint(&self.cfg.robot.joint_upper);
        let clamped: Vec<f64> = targets.iter().enumerate().map(|(j, t)| t.clamp(lower[j], upper[j])).collect();
        let keep = delay_steps(self.dynamics.system_delay_ms, self.inner_dt) + 1;
        for _ in 0..self.substeps {
            if self.termination != Termination::Running {
                break;
            }
            self.history.push_back(clamped.clone());
            while self.history.len() > keep {
                self.history.pop_front();
            }
            let hist = self.history.make_contiguous();
            let active = apply_delay(hist, self.dynamics.system_delay_ms, self.inner_dt).to_vec();
            self.substep(&active);
        }
        self.check_termination();
        let dt_policy = self.inner_dt * self.substeps as f64;
        let snapshot = self.snapshot();
        for k in 0..2 {
            self.foot_acc_z[k] = (snapshot.foot_vel[k][1] - self.foot_vz_prev[k]) / dt_policy;
            self.foot_vz_prev[k] = snapshot.foot_vel[k][1];
        }
        SimState { foot_acc_z: self.foot_acc_z, ..snapshot }
    }

    fn substep(&mut self, targets: &[f64]) {
        let dt = self.inner_dt;
        let robot = &self.cfg.robot;
        let mut m = [0.0; NQ * NQ];
        let mut rhs = robot.mass_and_bias(&self.q, &self.qd, self.trunk_mass, &mut m);

        // Actuation.
        let gains = self.gains();
        let strength = self.dynamics.motor_strength;
        let tau = pd_torque(targets, &self.q[3..], &self.qd[3..], &gains, strength, &self.dynamics.motor_offset);
        let lower = RobotModel::per_joint(&robot.joint_lower);
        let upper = RobotModel::per_joint(&robot.joint_upper);
        for j in 0..NJ {
            self.torques[j] = tau[j];
            rhs[j + 3] += tau[j];
            // Soft joint stops.
            let th = self.q[j + 3];
            let over = (th - upper[j]).max(0.0) + (th - lower[j]).min(0.0);
            if over != 0.0 {
                rhs[j + 3] -= self.cfg.limit_stiffness * over + 0.1 * self.cfg.limit_stiffness * dt * self.qd[j + 3];
            }
            // Treat the unsaturated damping term implicitly for stability with stiff gains.
            if tau[j].abs() < gains[j].limit {
                m[(j + 3) * NQ + j + 3] += dt * strength * gains[j].kd;
            }
        }

        // Contacts.
        let terrain = self.cfg.terrain;
        let mu = self.dynamics.friction;
        for (i, spec) in robot.contact_points().into_iter().enumerate() {
            let pk = robot.point(&self.q, &self.qd, spec);
            let [x, z] = pk.pos;
            let s = terrain.gradient(x);
            let inv = 1.0 / libm::sqrt(1.0 + s * s);
            let n = [-s * inv, inv];
            let t = [inv, s * inv];
            let depth = (terrain.height(x) - z) * inv;
            if depth <= 0.0 {
                self.anchors[i] = None;
                self.normal[i] = 0.0;
                self.penetrating[i] = false;
                continue;
            }
            self.penetrating[i] = true;
            let vn = pk.vel[0] * n[0] + pk.vel[1] * n[1];
            let vt = pk.vel[0] * t[0] + pk.vel[1] * t[1];
            let anchor = *self.anchors[i].get_or_insert(pk.pos);
            let slip = (x - anchor[0]) * t[0] + (z - anchor[1]) * t[1];
            let c = contact_force(robot, depth, vn, slip, vt, mu);
            if c.sliding {
                self.anchors[i] = Some([x - c.slip * t[0], z - c.slip * t[1]]);
            }
            let (fn_, ft) = (c.normal, c.tangential);
            self.normal[i] = fn_;
            let f = [fn_ * n[0] + ft * t[0], fn_ * n[1] + ft * t[1]];
            for r in 0..NQ {
                rhs[r] += pk.jac[0][r] * f[0] + pk.jac[1][r] * f[1];
            }
        }

        // External push on the trunk center of mass.
        let (pf, ptau) = self.wrench_at(self.time);
        if pf != [0.0; 2] || ptau != 0.0 {
            let com = robot.bodies(self.trunk_mass)[TRUNK].2;
            let pk = robot.point(&self.q, &self.qd, com);
            for r in 0..NQ {
                rhs[r] += pk.jac[0][r] * pf[0] + pk.jac[1][r] * pf[1];
            }
            rhs[2] += ptau;
        }

        if solve_in_place(&mut m, &mut rhs, NQ).is_err() {
            self.termination = Termination::Diverged;
            return;
        }
        for i in 0..NQ {
            self.qd[i] += dt * rhs[i];
            self.q[i] += dt * self.qd[i];
        }
        self.time += dt;
    }

    fn check_termination(&mut self) {
        if self.termination != Termination::Running {
            return;
        }
        let finite = self.q.iter().chain(&self.qd).all(|v| v.is_finite());
        if !finite || self.qd.iter().any(|v| v.abs() > self.cfg.max_speed) {
            self.termination = Termination::Diverged;
        } else if self.base_height() < self.cfg.fall_height_ratio * self.nominal_height
            || self.q[2].abs() > self.cfg.max_pitch
        {
            self.termination = Termination::Fell;
        }
    }

    pub fn termination(&self) -> Termination {
        self.termination
    }

    pub fn snapshot(&self) -> SimState {
        let robot = &self.cfg.robot;
        let mut foot_pos = [[0.0; 2]; 2];
        let mut foot_vel = [[0.0; 2]; 2];
        let mut foot_clearance = [0.0; 2];
        for (k, link) in [FOOT_L, FOOT_R].into_iter().enumerate() {
            let pk = robot.point(&self.q, &self.qd, robot.sole(link));
            foot_pos[k] = pk.pos;
            foot_vel[k] = pk.vel;
            foot_clearance[k] = pk.pos[1] - self.cfg.terrain.height(pk.pos[0]);
        }
        let (pf, ptau) = self.wrench_at(self.time);
        SimState {
            time: self.time,
            q: self.q,
            qd: self.qd,
            torques: self.torques,
            foot_pos,
            foot_vel,
            foot_clearance,
            foot_acc_z: self.foot_acc_z,
            foot_contact: [self.penetrating[0] || self.penetrating[1], self.penetrating[2] || self.penetrating[3]],
            foot_force: [self.normal[0] + self.normal[1], self.normal[2] + self.normal[3]],
            push_wrench: [pf[0], 0.0, pf[1], 0.0, ptau, 0.0],
            base_height: self.base_height(),
            termination: self.termination,
        }
    }
}

/// Penalty contact response at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactForce {
    pub normal: f64,
    pub tangential: f64,
    /// True when the tangential force sits on the friction cone.
    pub sliding: bool,
    /// Tangential anchor offset after the update.
    pub slip: f64,
}

/// Spring-damper normal force and a stick-slip tangential spring capped at
/// `mu * normal`. `slip` is the tangential distance from the sticking anchor.
pub fn contact_force(robot: &RobotModel, depth: f64, vn: f64, slip: f64, vt: f64, mu: f64) -> ContactForce {
    if depth <= 0.0 {
        return ContactForce { normal: 0.0, tangential: 0.0, sliding: false, slip: 0.0 };
    }
    let normal = (robot.contact_stiffness * depth - robot.contact_damping * vn).max(0.0);
    let trial = -robot.tangential_stiffness * slip - robot.tangential_damping * vt;
    let cap = mu * normal;
    if trial.abs() > cap {
        let tangential = trial.signum() * cap;
        // Drag the anchor so the spring alone would carry the capped force.
        ContactForce { normal, tangential, sliding: true, slip: -tangential / robot.tangential_stiffness }
    } else {
        ContactForce { normal, tangential: trial, sliding: false, slip }
    }
}

/// Terrain height minus `base_z` at each grid sample around `base_x`; lateral rows repeat.
pub fn height_scan(terrain: &TerrainProfile, base_x: f64, base_z: f64, grid: &ScanGrid) -> Vec<f64> {
    grid.x_offsets().into_iter().map(|dx| terrain.height(base_x + dx) - base_z).collect()
}

#[cfg(test)]
mod tests;
