//! Training environments: the planar locomotion task and a kinematic stub
//! that produces correctly shaped vectors for any [`EnvConfig`].

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, config_err, Error, Result};
use crate::gait::{foot_reference, solve_quintic, stance_mask, GaitClock, QuinticCoeffs};
use crate::noise::{corrupt_observation, sample_dynamics};
use crate::obs::{assemble_state, Command, EnvConfig, ObsVector, SimTruth, StateVector};
use crate::rewards::{step_reward, RewardBreakdown, RewardInputs};
use crate::rng::RngStream;
use crate::sim::{SimConfig, SimState, Simulator, Termination, TerrainProfile, NJ};

/// Episode, command and perturbation settings of the locomotion task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    /// Policy steps before a timeout.
    pub episode_length: usize,
    /// Joint target = nominal + action_scale * action.
    pub action_scale: f64,
    /// Actions are clipped to `[-action_clip, action_clip]` before scaling.
    pub action_clip: f64,
    /// Forward velocity command range (m/s).
    pub command_vx: [f64; 2],
    /// Yaw-rate command range (rad/s); a planar robot cannot turn, so keep it at zero.
    pub command_yaw: [f64; 2],
    /// Seconds between command resamples; 0 keeps one command per episode.
    pub command_interval: f64,
    /// Mean seconds between random pushes; 0 disables them.
    pub push_interval: f64,
    pub push_force: f64,
    pub push_torque: f64,
    pub push_duration: f64,
    /// Draw a fresh irregular-terrain seed every episode.
    pub randomize_terrain: bool,
    /// Start each episode at a random gait phase.
    pub random_phase: bool,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            episode_length: 2400,
            action_scale: 0.25,
            action_clip: 4.0,
            command_vx: [0.0, 0.4],
            command_yaw: [0.0, 0.0],
            command_interval: 0.0,
            push_interval: 4.0,
            push_force: 30.0,
            push_torque: 5.0,
            push_duration: 0.1,
            randomize_terrain: true,
            random_phase: false,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episode_length == 0 {
            return Err(config_err("task.episode_length", "must be at least 1"));
        }
        if !(self.action_scale > 0.0) || !(self.action_clip > 0.0) {
            return Err(config_err("task.action_scale", "action scale and clip must be positive"));
        }
        for (field, r) in [("task.command_vx", self.command_vx), ("task.command_yaw", self.command_yaw)] {
            if !(r[0] <= r[1]) {
                return Err(config_err(field, "range must satisfy lo <= hi"));
            }
        }
        if self.push_interval < 0.0 || self.push_force < 0.0 || self.push_torque < 0.0 {
            return Err(config_err("task.push_interval", "push settings cannot be negative"));
        }
        if self.push_interval > 0.0 && !(self.push_duration > 0.0) {
            return Err(config_err("task.push_duration", "must be positive when pushes are enabled"));
        }
        if self.command_interval < 0.0 {
            return Err(config_err("task.command_interval", "cannot be negative"));
        }
        Ok(())
    }
}

/// Outcome of one policy step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: ObsVector,
    pub state: StateVector,
    pub reward: f64,
    pub done: bool,
    /// Ended by a fall or numerical failure rather than the time limit.
    pub fell: bool,
}

pub trait Environment: Send {
    fn config(&self) -> &EnvConfig;

    fn action_dim(&self) -> usize {
        self.config().joint_count
    }

    /// Starts a new episode.
    fn reset(&mut self) -> Result<(ObsVector, StateVector)>;

    fn step(&mut self, action: &[f64]) -> Result<Transition>;
}

/// Per-step record kept for replays and state-estimation reports.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub sim: SimState,
    pub command: Command,
    pub breakdown: RewardBreakdown,
}

pub struct LocomotionEnv {
    env: EnvConfig,
    sim_cfg: SimConfig,
    task: TaskConfig,
    coeffs: QuinticCoeffs,
    rng: RngStream,
    sim: Option<Simulator>,
    clock: GaitClock,
    command: Command,
    actions: [Vec<f64>; 3],
    last_reward: f64,
    steps: usize,
    next_push: f64,
    next_command: f64,
    info: Option<StepInfo>,
}

impl LocomotionEnv {
    pub fn new(env: EnvConfig, sim_cfg: SimConfig, task: TaskConfig, rng: RngStream) -> Result<Self> {
        env.validate()?;
        sim_cfg.validate()?;
        task.validate()?;
        if env.joint_count != NJ {
            return Err(config_err("env.joint_count", "the planar simulator drives exactly 6 joints"));
        }
        let coeffs = solve_quintic(&env.trajectory)?;
        let clock = GaitClock::new(env.cycle_time, 0.0)?;
        Ok(Self {
            env,
            sim_cfg,
            task,
            coeffs,
            rng,
            sim: None,
            clock,
            command: Command::default(),
            actions: [vec![0.0; NJ], vec![0.0; NJ], vec![0.0; NJ]],
            last_reward: 0.0,
            steps: 0,
            next_push: f64::INFINITY,
            next_command: f64::INFINITY,
            info: None,
        })
    }

    pub fn simulator(&self) -> Option<&Simulator> {
        self.sim.as_ref()
    }

    pub fn last_info(&self) -> Option<&StepInfo> {
        self.info.as_ref()
    }

    pub fn command(&self) -> Command {
        self.command
    }

    pub fn set_command(&mut self, command: Command) {
        self.command = command;
    }

    pub fn task(&self) -> &TaskConfig {
        &self.task
    }

    fn sample_command(&mut self) {
        self.command = Command {
            vx: self.rng.uniform(self.task.command_vx[0], self.task.command_vx[1]),
            vy: 0.0,
            yaw_rate: self.rng.uniform(self.task.command_yaw[0], self.task.command_yaw[1]),
        };
    }

    fn sample_push_gap(&mut self) -> f64 {
        let k = self.task.push_interval;
        if k > 0.0 {
            self.rng.uniform(0.5 * k, 1.5 * k)
        } else {
            f64::INFINITY
        }
    }

    fn truth(&self, s: &SimState, sim: &Simulator) -> SimTruth {
        let base = [s.q[0], s.q[1]];
        let mut feet = [0.0; 12];
        for k in 0..2 {
            let o = 6 * k;
            feet[o] = s.foot_pos[k][0] - base[0];
            feet[o + 2] = s.foot_pos[k][1] - base[1];
            feet[o + 3] = s.foot_vel[k][0];
            feet[o + 5] = s.foot_vel[k][1];
        }
        SimTruth {
            joint_pos: s.joint_pos().to_vec(),
            joint_vel: s.joint_vel().to_vec(),
            torques: s.torques.to_vec(),
            base_ang_vel: [0.0, s.qd[2], 0.0],
            orientation: [0.0, s.q[2], 0.0],
            base_lin_vel: [s.qd[0], 0.0, s.qd[1]],
            friction: sim.dynamics().friction,
            push_wrench: s.push_wrench,
            feet_movement: feet,
            feet_contact: s.foot_contact,
            body_mass: sim.body_mass(),
            height_scan: sim.height_scan(&self.env.height_scan),
        }
    }

    fn emit(&mut self, s: &SimState) -> Result<(ObsVector, StateVector)> {
        let sim = self.sim.as_ref().ok_or(Error::MissingInput("simulator"))?;
        let truth = self.truth(s, sim);
        let state = assemble_state(&truth, &self.clock, &self.command, &self.actions[0], self.last_reward, &self.env)?;
        let obs = corrupt_observation(&state, &mut self.rng, &self.env)?;
        Ok((obs, state))
    }
}

impl Environment for LocomotionEnv {
    fn config(&self) -> &EnvConfig {
        &self.env
    }

    fn reset(&mut self) -> Result<(ObsVector, StateVector)> {
        let dynamics = sample_dynamics(&mut self.rng, &self.env.noise, NJ);
        let mut sim_cfg = self.sim_cfg.clone();
        if self.task.randomize_terrain {
            if let TerrainProfile::Irregular { ref mut seed, .. } = sim_cfg.terrain {
                *seed = self.rng.next_u64();
            }
        }
        let noise = sim_cfg.init_joint_noise;
        let mut pose = [0.0; NJ];
        for (j, p) in pose.iter_mut().enumerate() {
            *p = self.env.nominal_pose[j] + self.rng.uniform(-noise, noise);
        }
        let sim = Simulator::new(sim_cfg, &pose, dynamics, self.env.inner_dt(), self.env.substeps())?;
        let phase = if self.task.random_phase { self.rng.uniform(0.0, 1.0) } else { 0.0 };
        self.clock = GaitClock::new(self.env.cycle_time, phase)?;
        self.sample_command();
        self.actions = [vec![0.0; NJ], vec![0.0; NJ], vec![0.0; NJ]];
        self.last_reward = 0.0;
        self.steps = 0;
        self.next_push = self.sample_push_gap();
        self.next_command = if self.task.command_interval > 0.0 { self.task.command_interval } else { f64::INFINITY };
        let s = sim.snapshot();
        self.sim = Some(sim);
        self.info = None;
        self.emit(&s)
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        check_len("action", NJ, action.len())?;
        let clip = self.task.action_clip;
        let action: Vec<f64> = action.iter().map(|a| a.clamp(-clip, clip)).collect();
        let targets: Vec<f64> =
            (0..NJ).map(|j| self.env.nominal_pose[j] + self.task.action_scale * action[j]).collect();

        let time = self.sim.as_ref().ok_or(Error::MissingInput("reset before step"))?.time();
        if time >= self.next_push {
            let f = self.task.push_force;
            let force = [self.rng.uniform(-f, f), self.rng.uniform(-0.25 * f, 0.25 * f)];
            let torque = self.rng.uniform(-self.task.push_torque, self.task.push_torque);
            let duration = self.task.push_duration;
            let gap = self.sample_push_gap();
            self.next_push = time + gap;
            self.sim.as_mut().expect("checked above").apply_push(force, torque, duration)?;
        }
        if time >= self.next_command {
            self.sample_command();
            self.next_command = time + self.task.command_interval;
        }

        let s = self.sim.as_mut().expect("checked above").step(&targets);
        self.clock = self.clock.advance(self.env.control_dt())?;
        self.actions.rotate_right(1);
        self.actions[0] = action;
        self.steps += 1;

        let reference = foot_reference(&self.clock, &self.coeffs, self.env.trajectory.duration);
        let foot_speed = [
            libm::hypot(s.foot_vel[0][0], s.foot_vel[0][1]),
            libm::hypot(s.foot_vel[1][0], s.foot_vel[1][1]),
        ];
        let inputs = RewardInputs {
            base_lin_vel: [s.qd[0], 0.0, s.qd[1]],
            base_ang_vel: [0.0, s.qd[2], 0.0],
            orientation: [0.0, s.q[2], 0.0],
            base_height: s.base_height,
            command: self.command,
            stance: stance_mask(&self.clock),
            foot_force: s.foot_force,
            foot_speed,
            foot_height: s.foot_clearance,
            foot_vel_z: [s.foot_vel[0][1], s.foot_vel[1][1]],
            foot_acc_z: s.foot_acc_z,
            reference: Some(reference),
            joint_pos: s.joint_pos(),
            joint_vel: s.joint_vel(),
            torques: &s.torques,
            nominal_pose: &self.env.nominal_pose,
            actions: [&self.actions[0], &self.actions[1], &self.actions[2]],
        };
        let breakdown = step_reward(&inputs, &self.env.rewards)?;
        let reward = breakdown.total;
        self.last_reward = reward;
        let fell = s.termination != Termination::Running;
        let done = fell || self.steps >= self.task.episode_length;
        let (obs, state) = self.emit(&s)?;
        self.info = Some(StepInfo { sim: s, command: self.command, breakdown });
        Ok(Transition { obs, state, reward, done, fell })
    }
}

/// Kinematic stand-in: joints follow their targets exactly and every other
/// channel is a smooth deterministic function of time. Any joint count works.
pub struct StubEnv {
    env: EnvConfig,
    episode_length: usize,
    rng: RngStream,
    clock: GaitClock,
    joints: Vec<f64>,
    velocity: Vec<f64>,
    last_action: Vec<f64>,
    last_reward: f64,
    steps: usize,
}

impl StubEnv {
    pub fn new(env: EnvConfig, episode_length: usize, rng: RngStream) -> Result<Self> {
        env.validate()?;
        let clock = GaitClock::new(env.cycle_time, 0.0)?;
        let n = env.joint_count;
        Ok(Self {
            joints: env.nominal_pose.clone(),
            velocity: vec![0.0; n],
            last_action: vec![0.0; n],
            env,
            episode_length: episode_length.max(1),
            rng,
            clock,
            last_reward: 0.0,
            steps: 0,
        })
    }

    fn emit(&mut self) -> Result<(ObsVector, StateVector)> {
        let t = self.steps as f64 * self.env.control_dt();
        let n = self.env.joint_count;
        let pitch = 0.05 * libm::sin(t);
        let truth = SimTruth {
            joint_pos: self.joints.clone(),
            joint_vel: self.velocity.clone(),
            torques: self.velocity.iter().map(|v| -v).collect(),
            base_ang_vel: [0.0, 0.05 * libm::cos(t), 0.0],
            orientation: [0.0, pitch, 0.0],
            base_lin_vel: [0.3 + 0.1 * libm::sin(0.5 * t), 0.0, 0.0],
            friction: 1.0,
            push_wrench: [0.0; 6],
            feet_movement: [0.0; 12],
            feet_contact: [stance_mask(&self.clock).left, stance_mask(&self.clock).right],
            body_mass: 38.0,
            height_scan: vec![-0.7; self.env.height_scan_count()],
        };
        debug_assert_eq!(truth.joint_pos.len(), n);
        let command = Command { vx: 0.3, vy: 0.0, yaw_rate: 0.0 };
        let state = assemble_state(&truth, &self.clock, &command, &self.last_action, self.last_reward, &self.env)?;
        let obs = corrupt_observation(&state, &mut self.rng, &self.env)?;
        Ok((obs, state))
    }
}

impl Environment for StubEnv {
    fn config(&self) -> &EnvConfig {
        &self.env
    }

    fn reset(&mut self) -> Result<(ObsVector, StateVector)> {
        self.joints = self.env.nominal_pose.clone();
        self.velocity.iter_mut().for_each(|v| *v = 0.0);
        self.last_action.iter_mut().for_each(|v| *v = 0.0);
        self.last_reward = 0.0;
        self.steps = 0;
        self.clock = GaitClock::new(self.env.cycle_time, 0.0)?;
        self.emit()
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        check_len("action", self.env.joint_count, action.len())?;
        let dt = self.env.control_dt();
        for j in 0..action.len() {
            let target = self.env.nominal_pose[j] + 0.25 * action[j].clamp(-4.0, 4.0);
            self.velocity[j] = (target - self.joints[j]) / dt;
            self.joints[j] = target;
        }
        self.last_action = action.to_vec();
        self.clock = self.clock.advance(dt)?;
        self.steps += 1;
        let deviation: f64 = action.iter().map(|a| a * a).sum::<f64>() / action.len().max(1) as f64;
        let reward = libm::exp(-deviation);
        self.last_reward = reward;
        let done = self.steps >= self.episode_length;
        let (obs, state) = self.emit()?;
        Ok(Transition { obs, state, reward, done, fell: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obs::{Channel, Layout};
    use crate::profiles;

    fn planar_env(seed: u64) -> LocomotionEnv {
        let run = profiles::smoke();
        LocomotionEnv::new(run.env, run.sim, run.task, RngStream::new(seed, 0)).unwrap()
    }

    #[test]
    fn reset_and_step_shapes() {
        let mut env = planar_env(1);
        let (obs, state) = env.reset().unwrap();
        assert_eq!(obs.0.len(), env.config().obs_dim());
        assert_eq!(state.0.len(), env.config().state_dim());
        let t = env.step(&[0.0; NJ]).unwrap();
        assert_eq!(t.state.0.len(), env.config().state_dim());
        assert!(t.reward.is_finite());
        assert!(env.step(&[0.0; 3]).is_err());
    }

    #[test]
    fn current_reward_channel_is_previous_total() {
        let mut env = planar_env(2);
        env.reset().unwrap();
        let layout = Layout::state(env.config());
        for _ in 0..5 {
            let t = env.step(&[0.1; NJ]).unwrap();
            assert_eq!(t.state.channel(&layout, Channel::CurrentReward), &[t.reward]);
        }
    }

    #[test]
    fn zero_action_stands_through_episode_start() {
        let mut env = planar_env(3);
        env.reset().unwrap();
        for _ in 0..100 {
            let t = env.step(&[0.0; NJ]).unwrap();
            assert!(!t.fell);
            assert!(t.reward > 0.0);
        }
    }

    #[test]
    fn same_seed_same_episode() {
        let run = |seed| {
            let mut env = planar_env(seed);
            let mut out = vec![env.reset().unwrap().0];
            for k in 0..30 {
                let a = [0.3 * libm::sin(k as f64); NJ];
                out.push(env.step(&a).unwrap().obs);
            }
            out
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn stub_handles_paper_dimensions() {
        let cfg = profiles::paper_env();
        let mut env = StubEnv::new(cfg, 10, RngStream::new(0, 0)).unwrap();
        let (obs, state) = env.reset().unwrap();
        assert_eq!((obs.0.len(), state.0.len()), (47, 184));
        let mut done = false;
        for _ in 0..10 {
            done = env.step(&[0.0; 12]).unwrap().done;
        }
        assert!(done);
    }
}
