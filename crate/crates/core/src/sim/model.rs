//! Planar biped geometry and rigid-body terms.
//!
//! Generalized coordinates `q = [x, z, pitch, hip_l, knee_l, ankle_l, hip_r, knee_r, ankle_r]`.
//! The base point is the hip joint. Link angles are measured counter-clockwise in the
//! sagittal (x, z) plane; a link at absolute angle `a` points along `d(a) = (sin a, -cos a)`
//! (straight down at `a = 0`) with forward axis `f(a) = (cos a, sin a)`.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

pub const NQ: usize = 9;
pub const NJ: usize = 6;
pub const NLINKS: usize = 7;

/// Link indices: trunk, then thigh/shank/foot for the left and right legs.
pub const TRUNK: usize = 0;
pub const FOOT_L: usize = 3;
pub const FOOT_R: usize = 6;

pub(crate) fn down(a: f64) -> [f64; 2] {
    [libm::sin(a), -libm::cos(a)]
}

pub(crate) fn fwd(a: f64) -> [f64; 2] {
    [libm::cos(a), libm::sin(a)]
}

/// Links from the hip down to `link`, inclusive.
fn chain(link: usize) -> &'static [usize] {
    match link {
        1 => &[1],
        2 => &[1, 2],
        3 => &[1, 2, 3],
        4 => &[4],
        5 => &[4, 5],
        6 => &[4, 5, 6],
        _ => &[0],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    pub length: f64,
    pub mass: f64,
    /// Rotational inertia about the center of mass, kg m^2.
    pub inertia: f64,
    /// Distance from the proximal joint to the center of mass.
    pub com: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotModel {
    pub trunk_mass: f64,
    pub trunk_inertia: f64,
    /// Trunk center of mass above the hip.
    pub trunk_com_height: f64,
    pub thigh: LinkParams,
    pub shank: LinkParams,
    pub foot_mass: f64,
    pub foot_inertia: f64,
    /// Sole depth below the ankle.
    pub ankle_height: f64,
    pub heel: f64,
    pub toe: f64,
    /// Per joint in [hip, knee, ankle] order, shared by both legs.
    pub joint_lower: [f64; 3],
    pub joint_upper: [f64; 3],
    pub torque_limit: [f64; 3],
    pub kp: [f64; 3],
    pub kd: [f64; 3],
    /// Reflected rotor inertia added to each joint's diagonal.
    pub armature: [f64; 3],
    pub gravity: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub tangential_stiffness: f64,
    pub tangential_damping: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self {
            trunk_mass: 10.0,
            trunk_inertia: 0.3,
            trunk_com_height: 0.2,
            thigh: LinkParams { length: 0.35, mass: 2.0, inertia: 0.025, com: 0.15 },
            shank: LinkParams { length: 0.35, mass: 1.2, inertia: 0.015, com: 0.15 },
            foot_mass: 0.4,
            foot_inertia: 0.002,
            ankle_height: 0.05,
            heel: 0.06,
            toe: 0.12,
            joint_lower: [-1.2, -2.2, -0.9],
            joint_upper: [1.2, 0.0, 0.9],
            // Hip/knee to ankle ratio follows the 250:36 hierarchy of the full-size robot.
            torque_limit: [100.0, 100.0, 14.4],
            kp: [300.0, 300.0, 20.0],
            kd: [6.0, 6.0, 5.0],
            armature: [0.05, 0.05, 0.02],
            gravity: 9.81,
            contact_stiffness: 30_000.0,
            contact_damping: 400.0,
            tangential_stiffness: 20_000.0,
            tangential_damping: 150.0,
        }
    }
}

/// A point rigidly attached to `link`, at `a * d(angle) + b * f(angle)` from its proximal joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSpec {
    pub link: usize,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointKinematics {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    /// Rows x and z of the 2 x NQ Jacobian.
    pub jac: [[f64; NQ]; 2],
    /// Velocity-product acceleration `Jdot * qdot`.
    pub bias: [f64; 2],
}

impl RobotModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("robot.trunk_mass", self.trunk_mass),
            ("robot.trunk_inertia", self.trunk_inertia),
            ("robot.thigh.length", self.thigh.length),
            ("robot.thigh.mass", self.thigh.mass),
            ("robot.thigh.inertia", self.thigh.inertia),
            ("robot.shank.length", self.shank.length),
            ("robot.shank.mass", self.shank.mass),
            ("robot.shank.inertia", self.shank.inertia),
            ("robot.foot_mass", self.foot_mass),
            ("robot.foot_inertia", self.foot_inertia),
            ("robot.contact_stiffness", self.contact_stiffness),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(field, "must be positive and finite"));
            }
        }
        for j in 0..3 {
            if !(self.joint_lower[j] < self.joint_upper[j]) {
                return Err(config_err("robot.joint_lower", "joint limits must satisfy lower < upper"));
            }
            if !(self.torque_limit[j] > 0.0) {
                return Err(config_err("robot.torque_limit", "must be positive"));
            }
            if self.kp[j] < 0.0 || self.kd[j] < 0.0 || self.armature[j] < 0.0 {
                return Err(config_err("robot.kp", "gains and armature must be non-negative"));
            }
        }
        if self.heel < 0.0 || self.toe < 0.0 || self.ankle_height < 0.0 {
            return Err(config_err("robot.heel", "foot dimensions must be non-negative"));
        }
        Ok(())
    }

    /// Per-joint value in coordinate order `[hip_l, knee_l, ankle_l, hip_r, knee_r, ankle_r]`.
    pub fn per_joint(v: &[f64; 3]) -> [f64; NJ] {
        [v[0], v[1], v[2], v[0], v[1], v[2]]
    }

    pub fn total_mass(&self) -> f64 {
        self.trunk_mass + 2.0 * (self.thigh.mass + self.shank.mass + self.foot_mass)
    }

    fn segment_length(&self, link: usize) -> f64 {
        match link {
            1 | 4 => self.thigh.length,
            2 | 5 => self.shank.length,
            _ => 0.0,
        }
    }

    /// Absolute angle of each link.
    pub fn link_angles(q: &[f64; NQ]) -> [f64; NLINKS] {
        let mut out = [q[2]; NLINKS];
        for (link, angle) in out.iter_mut().enumerate().skip(1) {
            *angle = q[2] + chain(link).iter().map(|&m| q[m + 2]).sum::<f64>();
        }
        out
    }

    pub fn link_rates(qd: &[f64; NQ]) -> [f64; NLINKS] {
        Self::link_angles(qd)
    }

    /// Angular Jacobian row of `link`.
    pub fn angular_jacobian(link: usize) -> [f64; NQ] {
        let mut j = [0.0; NQ];
        j[2] = 1.0;
        if link != TRUNK {
            for &m in chain(link) {
                j[m + 2] = 1.0;
            }
        }
        j
    }

    pub fn point(&self, q: &[f64; NQ], qd: &[f64; NQ], spec: PointSpec) -> PointKinematics {
        let angles = Self::link_angles(q);
        let rates = Self::link_rates(qd);
        let mut pos = [q[0], q[1]];
        let mut vel = [qd[0], qd[1]];
        let mut jac = [[0.0; NQ]; 2];
        jac[0][0] = 1.0;
        jac[1][1] = 1.0;
        let mut bias = [0.0; 2];
        let links = chain(spec.link);
        for (i, &m) in links.iter().enumerate() {
            let (a, b) = if m == spec.link { (spec.a, spec.b) } else { (self.segment_length(m), 0.0) };
            let dv = down(angles[m]);
            let fv = fwd(angles[m]);
            let e = [a * fv[0] - b * dv[0], a * fv[1] - b * dv[1]];
            let w = rates[m];
            for k in 0..2 {
                pos[k] += a * dv[k] + b * fv[k];
                vel[k] += e[k] * w;
                bias[k] += -w * w * (a * dv[k] + b * fv[k]);
                jac[k][2] += e[k];
                if m != TRUNK {
                    // Every joint at or above `m` on the chain rotates this segment.
                    for &n in &links[..=i] {
                        jac[k][n + 2] += e[k];
                    }
                }
            }
        }
        PointKinematics { pos, vel, jac, bias }
    }

    /// Mass, inertia and center-of-mass location of every link.
    pub fn bodies(&self, trunk_mass: f64) -> [(f64, f64, PointSpec); NLINKS] {
        let th = &self.thigh;
        let sh = &self.shank;
        let foot = PointSpec { link: 0, a: 0.6 * self.ankle_height, b: 0.5 * (self.toe - self.heel) };
        [
            (trunk_mass, self.trunk_inertia, PointSpec { link: TRUNK, a: -self.trunk_com_height, b: 0.0 }),
            (th.mass, th.inertia, PointSpec { link: 1, a: th.com, b: 0.0 }),
            (sh.mass, sh.inertia, PointSpec { link: 2, a: sh.com, b: 0.0 }),
            (self.foot_mass, self.foot_inertia, PointSpec { link: FOOT_L, ..foot }),
            (th.mass, th.inertia, PointSpec { link: 4, a: th.com, b: 0.0 }),
            (sh.mass, sh.inertia, PointSpec { link: 5, a: sh.com, b: 0.0 }),
            (self.foot_mass, self.foot_inertia, PointSpec { link: FOOT_R, ..foot }),
        ]
    }

    /// Heel and toe of each foot: `[heel_l, toe_l, heel_r, toe_r]`.
    pub fn contact_points(&self) -> [PointSpec; 4] {
        let h = self.ankle_height;
        [
            PointSpec { link: FOOT_L, a: h, b: -self.heel },
            PointSpec { link: FOOT_L, a: h, b: self.toe },
            PointSpec { link: FOOT_R, a: h, b: -self.heel },
            PointSpec { link: FOOT_R, a: h, b: self.toe },
        ]
    }

    /// Sole center under the ankle, used as the foot position.
    pub fn sole(&self, foot_link: usize) -> PointSpec {
        PointSpec { link: foot_link, a: self.ankle_height, b: 0.0 }
    }

    /// Fills `m` (row-major NQ x NQ) and returns the generalized gravity + velocity-product
    /// force `g_q - c_q`, i.e. everything on the right-hand side except actuation and contact.
    pub fn mass_and_bias(&self, q: &[f64; NQ], qd: &[f64; NQ], trunk_mass: f64, m: &mut [f64; NQ * NQ]) -> [f64; NQ] {
        m.iter_mut().for_each(|x| *x = 0.0);
        let mut rhs = [0.0; NQ];
        for (mass, inertia, spec) in self.bodies(trunk_mass) {
            let pk = self.point(q, qd, spec);
            let jw = Self::angular_jacobian(spec.link);
            for r in 0..NQ {
                for c in 0..NQ {
                    m[r * NQ + c] += mass * (pk.jac[0][r] * pk.jac[0][c] + pk.jac[1][r] * pk.jac[1][c]) + inertia * jw[r] * jw[c];
                }
                // Rotational velocity products vanish in the plane.
                rhs[r] += mass * (pk.jac[1][r] * -self.gravity - pk.jac[0][r] * pk.bias[0] - pk.jac[1][r] * pk.bias[1]);
            }
        }
        let arm = Self::per_joint(&self.armature);
        for j in 0..NJ {
            m[(j + 3) * NQ + j + 3] += arm[j];
        }
        rhs
    }

    /// Kinetic plus gravitational potential energy.
    pub fn energy(&self, q: &[f64; NQ], qd: &[f64; NQ], trunk_mass: f64) -> f64 {
        let mut e = 0.0;
        for (mass, inertia, spec) in self.bodies(trunk_mass) {
            let pk = self.point(q, qd, spec);
            let w: f64 = Self::angular_jacobian(spec.link).iter().zip(qd).map(|(a, b)| a * b).sum();
            e += 0.5 * mass * (pk.vel[0] * pk.vel[0] + pk.vel[1] * pk.vel[1]) + 0.5 * inertia * w * w;
            e += mass * self.gravity * pk.pos[1];
        }
        let arm = Self::per_joint(&self.armature);
        for j in 0..NJ {
            e += 0.5 * arm[j] * qd[j + 3] * qd[j + 3];
        }
        e
    }

    /// Hip height above the lowest contact point for a pose with zero pitch.
    pub fn standing_height(&self, joints: &[f64; NJ]) -> f64 {
        let mut q = [0.0; NQ];
        q[3..].copy_from_slice(joints);
        let zero = [0.0; NQ];
        self.contact_points().iter().map(|&p| -self.point(&q, &zero, p).pos[1]).fold(f64::MIN, f64::max)
    }
}
