use super::*;
use alloc::vec;

const POSE: [f64; NJ] = [0.55, -0.8, 0.25, 0.25, -0.8, 0.55];

fn sim_with(cfg: SimConfig, dynamics: RandomizedDynamics) -> Simulator {
    Simulator::new(cfg, &POSE, dynamics, 0.002, 5).unwrap()
}

fn nominal() -> RandomizedDynamics {
    RandomizedDynamics::nominal(NJ, 1.0)
}

fn ankle_gains() -> Vec<PdGains> {
    vec![PdGains { kp: 20.0, kd: 5.0, limit: 14.4 }]
}

#[test]
fn pd_torque_at_setpoint_is_zero() {
    let t = pd_torque(&[0.3], &[0.3], &[0.0], &ankle_gains(), 1.0, &[0.0]);
    assert_eq!(t, vec![0.0]);
}

#[test]
fn pd_torque_ankle_example() {
    let t = pd_torque(&[0.1], &[0.0], &[0.0], &ankle_gains(), 1.0, &[0.0]);
    assert!((t[0] - 2.0).abs() < 1e-12);
    let with_rate = pd_torque(&[0.1], &[0.0], &[0.2], &ankle_gains(), 1.0, &[0.0]);
    assert!((with_rate[0] - 1.0).abs() < 1e-12);
}

#[test]
fn pd_strength_scales_before_clamp() {
    let t = pd_torque(&[0.1], &[0.0], &[0.0], &ankle_gains(), 1.1, &[0.0]);
    assert!((t[0] - 2.2).abs() < 1e-12);
    let big = pd_torque(&[0.7], &[0.0], &[0.0], &ankle_gains(), 1.1, &[0.0]);
    assert_eq!(big[0], 14.4);
    let offset = pd_torque(&[0.0], &[0.0], &[0.0], &ankle_gains(), 1.0, &[0.05]);
    assert!((offset[0] - 1.0).abs() < 1e-12);
}

fn zero_gravity_free() -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.robot.gravity = 0.0;
    cfg.robot.kp = [0.0; 3];
    cfg.robot.kd = [0.0; 3];
    cfg.robot.joint_lower = [-10.0; 3];
    cfg.robot.joint_upper = [10.0; 3];
    cfg.max_pitch = 100.0;
    cfg.fall_height_ratio = 0.0;
    cfg
}

#[test]
fn ballistic_base_without_gravity_or_torque() {
    let mut sim = sim_with(zero_gravity_free(), nominal());
    let mut q = *sim.q();
    q[1] += 1.0;
    let mut qd = [0.0; NQ];
    qd[0] = 0.7;
    qd[1] = -0.2;
    sim.set_state(q, qd);
    for _ in 0..50 {
        sim.step(&POSE);
    }
    let t = sim.time();
    assert!((t - 0.5).abs() < 1e-9);
    assert!((sim.q()[0] - (q[0] + 0.7 * t)).abs() < 1e-9);
    assert!((sim.q()[1] - (q[1] - 0.2 * t)).abs() < 1e-9);
    assert!(sim.q()[2].abs() < 1e-12);
    assert!(sim.q()[3..].iter().zip(&POSE).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn free_fall_matches_closed_form() {
    let mut cfg = zero_gravity_free();
    cfg.robot.gravity = 9.81;
    let mut sim = sim_with(cfg, nominal());
    let mut q = *sim.q();
    q[1] += 5.0;
    sim.set_state(q, [0.0; NQ]);
    for _ in 0..20 {
        sim.step(&POSE);
    }
    let t = sim.time();
    // Semi-implicit Euler: z_n = z_0 - g dt^2 n(n+1)/2.
    let n = 100.0;
    let expected = q[1] - 9.81 * 0.002 * 0.002 * n * (n + 1.0) / 2.0;
    assert!((sim.q()[1] - expected).abs() < 1e-9);
    assert!((sim.q()[1] - (q[1] - 0.5 * 9.81 * t * t)).abs() < 0.01);
}

#[test]
fn passive_energy_drift_is_small() {
    let mut sim = sim_with(zero_gravity_free(), nominal());
    let mut q = *sim.q();
    q[1] += 2.0;
    let qd = [0.3, 0.1, 0.25, 1.0, -0.75, 1.5, -0.5, 1.25, -1.0];
    sim.set_state(q, qd);
    let e0 = sim.energy();
    for second in 1..=10 {
        for _ in 0..100 {
            sim.step(&POSE);
        }
        let rate = (sim.energy() - e0).abs() / e0 / second as f64;
        assert!(rate < 1e-3, "drift {rate} per second after {second} s");
    }
}

#[test]
fn standing_holds_height() {
    let mut sim = sim_with(SimConfig::default(), nominal());
    let h0 = sim.base_height();
    for _ in 0..200 {
        let s = sim.step(&POSE);
        assert_eq!(s.termination, Termination::Running);
        assert!((s.base_height - h0).abs() < 0.01, "t={} h={} h0={h0}", s.time, s.base_height);
    }
    let s = sim.snapshot();
    assert!(s.foot_contact[0] && s.foot_contact[1]);
    let weight = sim.body_mass() * 9.81;
    assert!(((s.foot_force[0] + s.foot_force[1]) - weight).abs() < 0.05 * weight);
}

#[test]
fn identical_inputs_are_bit_identical() {
    let run = || {
        let mut d = nominal();
        d.system_delay_ms = 6.0;
        d.friction = 0.6;
        let mut sim = sim_with(SimConfig::default(), d);
        let mut out = Vec::new();
        for k in 0..60 {
            let a = 0.2 * libm::sin(k as f64 * 0.3);
            let s = sim.step(&[0.4 + a, -0.8, 0.4, 0.4 - a, -0.8 + a, 0.4]);
            out.push(s);
        }
        out
    };
    assert_eq!(run(), run());
}

#[test]
fn friction_cone_caps_tangential_force() {
    let robot = RobotModel::default();
    // 1 mm of tangential stretch asks for 20 N against roughly 90 N of normal load.
    let low = contact_force(&robot, 0.003, 0.0, 0.001, 0.0, 0.2);
    let high = contact_force(&robot, 0.003, 0.0, 0.001, 0.0, 2.0);
    assert!((low.normal - 90.0).abs() < 1e-9);
    assert!(low.sliding && !high.sliding);
    assert!((low.tangential + 0.2 * low.normal).abs() < 1e-9);
    assert!((high.tangential + 20.0).abs() < 1e-9);
    assert!(low.tangential.abs() <= 0.2 * low.normal + 1e-12);
    let air = contact_force(&robot, -0.01, -1.0, 0.0, 1.0, 1.0);
    assert_eq!((air.normal, air.tangential), (0.0, 0.0));
}

fn foot_slide(friction: f64) -> f64 {
    let mut d = nominal();
    d.friction = friction;
    let mut sim = sim_with(SimConfig::default(), d);
    for _ in 0..50 {
        sim.step(&POSE);
    }
    let x0 = sim.snapshot().foot_pos[0][0];
    let mut qd = *sim.qd();
    qd[0] += 0.4;
    let q = *sim.q();
    sim.set_state(q, qd);
    for _ in 0..20 {
        sim.step(&POSE);
    }
    (sim.snapshot().foot_pos[0][0] - x0).abs()
}

#[test]
fn low_friction_slips_first() {
    // Same horizontal kick; only the friction coefficient differs.
    let low = foot_slide(0.2);
    let high = foot_slide(2.0);
    assert!(low > 0.003, "low friction slide {low}");
    assert!(low > 3.0 * high, "low {low} high {high}");
}

#[test]
fn zero_push_changes_nothing() {
    let mut a = sim_with(SimConfig::default(), nominal());
    let mut b = sim_with(SimConfig::default(), nominal());
    b.apply_push([0.0, 0.0], 0.0, 0.2).unwrap();
    for _ in 0..40 {
        assert_eq!(a.step(&POSE).q, b.step(&POSE).q);
    }
    assert!(b.apply_push([1.0, 0.0], 0.0, 0.0).is_err());
}

#[test]
fn push_channel_is_nonzero_only_inside_window() {
    let mut sim = sim_with(SimConfig::default(), nominal());
    for _ in 0..10 {
        assert_eq!(sim.step(&POSE).push_wrench, [0.0; 6]);
    }
    let push = sim.apply_push([30.0, 0.0], 2.0, 0.05).unwrap();
    for _ in 0..10 {
        let s = sim.step(&POSE);
        let inside = push.active(s.time);
        assert_eq!(s.push_wrench != [0.0; 6], inside, "t={}", s.time);
        if inside {
            assert_eq!(s.push_wrench, [30.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        }
    }
}

#[test]
fn larger_pushes_disturb_more() {
    let peak = |force: f64| {
        let mut sim = sim_with(SimConfig::default(), nominal());
        for _ in 0..20 {
            sim.step(&POSE);
        }
        sim.apply_push([force, 0.0], 0.0, 0.1).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..30 {
            worst = worst.max(sim.step(&POSE).qd[0].abs());
        }
        worst
    };
    let peaks: Vec<f64> = [0.0, 10.0, 20.0, 40.0, 80.0].iter().map(|&f| peak(f)).collect();
    for w in peaks.windows(2) {
        assert!(w[1] > w[0], "{peaks:?}");
    }
}

#[test]
fn contact_force_vanishes_above_ground() {
    let mut sim = sim_with(SimConfig::default(), nominal());
    let mut q = *sim.q();
    q[1] += 0.3;
    sim.set_state(q, [0.0; NQ]);
    let s = sim.step(&POSE);
    assert_eq!(s.foot_force, [0.0; 2]);
    assert_eq!(s.foot_contact, [false; 2]);
}

#[test]
fn falling_is_detected() {
    let mut cfg = SimConfig::default();
    cfg.robot.kp = [0.0; 3];
    cfg.robot.kd = [0.5; 3];
    let mut sim = sim_with(cfg, nominal());
    let mut fell = false;
    for _ in 0..300 {
        if sim.step(&POSE).termination == Termination::Fell {
            fell = true;
            break;
        }
    }
    assert!(fell);
}

#[test]
fn delay_holds_previous_target() {
    let mut d = nominal();
    d.system_delay_ms = 10.0;
    let mut delayed = sim_with(SimConfig::default(), d);
    let mut prompt = sim_with(SimConfig::default(), nominal());
    let target = [0.6, -0.8, 0.4, 0.4, -0.8, 0.4];
    let a = delayed.step(&target);
    let b = prompt.step(&target);
    // With 5 inner steps of latency nothing of the new target arrives within one policy step.
    assert!(a.torques[0].abs() < b.torques[0].abs());
}

#[test]
fn flat_scan_is_constant() {
    let grid = ScanGrid { rows: 8, cols: 12, length: 1.1, width: 0.7 };
    let scan = height_scan(&TerrainProfile::Flat, 0.3, 0.7, &grid);
    assert_eq!(scan.len(), 96);
    assert!(scan.iter().all(|h| (*h + 0.7).abs() < 1e-15));
}

#[test]
fn stairs_scan_steps_by_rise() {
    let grid = ScanGrid { rows: 8, cols: 12, length: 1.1, width: 0.7 };
    let scan = height_scan(&TerrainProfile::stairs(0.10, 0.20), 1.0, 0.8, &grid);
    for w in scan[..12].windows(2) {
        let d = w[1] - w[0];
        assert!(d.abs() < 1e-12 || (d - 0.10).abs() < 1e-12, "{d}");
    }
    assert_eq!(&scan[..12], &scan[12..24]);
}

#[test]
fn slope_scan_ramps() {
    let grid = ScanGrid { rows: 2, cols: 12, length: 1.1, width: 0.7 };
    let scan = height_scan(&TerrainProfile::slope(0.25), 2.0, 0.9, &grid);
    let dx = 1.1 / 11.0;
    for w in scan[..12].windows(2) {
        assert!((w[1] - w[0] - 0.25 * dx).abs() < 1e-12);
    }
}


