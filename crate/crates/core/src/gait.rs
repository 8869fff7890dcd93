//! Gait clock, periodic stance mask and the quintic swing-height planner.
//!
//! The gait cycle is split in two halves. The left foot is in planned
//! stance on phase `[0, 0.5)` and swings on `[0.5, 1)`; the right foot is the
//! mirror image. Each swing lasts half a cycle and follows a quintic height
//! profile `f(t) = a0 + a1 t + ... + a5 t^5` pinned by six boundary values.

use core::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitClock {
    pub cycle_time: f64,
    pub phase: f64,
}

impl GaitClock {
    pub fn new(cycle_time: f64, phase: f64) -> Result<Self> {
        if !(cycle_time > 0.0) || !cycle_time.is_finite() {
            return Err(config_err("cycle_time", "must be positive and finite"));
        }
        Ok(Self { cycle_time, phase: wrap_unit(phase) })
    }

    /// `(sin 2πφ, cos 2πφ)`.
    pub fn clock_signal(&self) -> [f64; 2] {
        let angle = TAU * self.phase;
        [libm::sin(angle), libm::cos(angle)]
    }

    pub fn advance(&self, dt: f64) -> Result<Self> {
        phase_advance(*self, dt)
    }
}

fn wrap_unit(x: f64) -> f64 {
    let w = x - libm::floor(x);
    // floor can round `w` up to exactly 1.0 for tiny negative inputs.
    if w >= 1.0 { 0.0 } else { w }
}

pub fn phase_advance(clock: GaitClock, dt: f64) -> Result<GaitClock> {
    if !(clock.cycle_time > 0.0) {
        return Err(config_err("cycle_time", "must be positive"));
    }
    if !(dt >= 0.0) {
        return Err(config_err("dt", "must be non-negative"));
    }
    Ok(GaitClock { cycle_time: clock.cycle_time, phase: wrap_unit(clock.phase + dt / clock.cycle_time) })
}

/// Planned contact per foot: `true` while the foot should be on the ground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StanceMask {
    pub left: bool,
    pub right: bool,
}

impl StanceMask {
    pub const STANDING: StanceMask = StanceMask { left: true, right: true };

    pub fn as_array(&self) -> [f64; 2] {
        [f64::from(u8::from(self.left)), f64::from(u8::from(self.right))]
    }
}

pub fn stance_mask(clock: &GaitClock) -> StanceMask {
    let left = clock.phase < 0.5;
    StanceMask { left, right: !left }
}

/// Boundary values for one swing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuinticConstraints {
    pub h0: f64,
    pub v0: f64,
    pub acc0: f64,
    pub h_max: f64,
    pub h_swing: f64,
    pub v_swing: f64,
    /// Swing duration in seconds.
    pub duration: f64,
}

impl Default for QuinticConstraints {
    fn default() -> Self {
        Self { h0: 0.0, v0: 0.1, acc0: 10.0, h_max: 0.1, h_swing: 0.0, v_swing: 0.0, duration: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuinticCoeffs(pub [f64; 6]);

impl QuinticCoeffs {
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        eval_quintic(self, t)
    }
}

fn powers(t: f64) -> [f64; 6] {
    let mut p = [1.0; 6];
    for k in 1..6 {
        p[k] = p[k - 1] * t;
    }
    p
}

/// Solves the square system `f(0)=h0, f'(0)=v0, f''(0)=acc0, f(T/2)=h_max,
/// f(T)=h_swing, f'(T)=v_swing`.
pub fn solve_quintic(c: &QuinticConstraints) -> Result<QuinticCoeffs> {
    let t = c.duration;
    if t.is_nan() || t < 0.0 || !t.is_finite() {
        return Err(config_err("duration", "swing duration must be positive"));
    }
    let mid = powers(t / 2.0);
    let end = powers(t);
    let mut a = [0.0; 36];
    a[0] = 1.0;
    a[6 + 1] = 1.0;
    a[12 + 2] = 2.0;
    a[18..24].copy_from_slice(&mid);
    a[24..30].copy_from_slice(&end);
    for k in 1..6 {
        a[30 + k] = k as f64 * end[k - 1];
    }
    let mut b = [c.h0, c.v0, c.acc0, c.h_max, c.h_swing, c.v_swing];
    linalg::solve_in_place(&mut a, &mut b, 6).map_err(|_| Error::Singular)?;
    Ok(QuinticCoeffs(b))
}

/// Height, velocity and acceleration of the polynomial at `t` (no clamping).
pub fn eval_quintic(coeffs: &QuinticCoeffs, t: f64) -> (f64, f64, f64) {
    let a = &coeffs.0;
    let mut h = 0.0;
    let mut v = 0.0;
    let mut acc = 0.0;
    // Horner for each derivative.
    for k in (0..6).rev() {
        h = h * t + a[k];
    }
    for k in (1..6).rev() {
        v = v * t + k as f64 * a[k];
    }
    for k in (2..6).rev() {
        acc = acc * t + (k * (k - 1)) as f64 * a[k];
    }
    (h, v, acc)
}

/// Vertical reference `(f_t, ḟ_t)` for each foot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FootReference {
    pub left: (f64, f64),
    pub right: (f64, f64),
}

impl FootReference {
    pub fn heights(&self) -> [f64; 2] {
        [self.left.0, self.right.0]
    }

    pub fn velocities(&self) -> [f64; 2] {
        [self.left.1, self.right.1]
    }
}

/// The swinging foot tracks the quintic at its local swing time (clamped to
/// `[0, swing_duration]`); the stance foot is referenced at `(0, 0)`.
pub fn foot_reference(clock: &GaitClock, coeffs: &QuinticCoeffs, swing_duration: f64) -> FootReference {
    let mask = stance_mask(clock);
    let at = |swing_start: f64| {
        let local = ((clock.phase - swing_start) * clock.cycle_time).clamp(0.0, swing_duration.max(0.0));
        let (h, v, _) = eval_quintic(coeffs, local);
        (h, v)
    };
    FootReference {
        left: if mask.left { (0.0, 0.0) } else { at(0.5) },
        right: if mask.right { (0.0, 0.0) } else { at(0.0) },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paper_coeffs() -> QuinticCoeffs {
        solve_quintic(&QuinticConstraints::default()).unwrap()
    }

    #[test]
    fn advance_quarter_and_wrap() {
        let c = GaitClock::new(1.0, 0.0).unwrap();
        assert!((c.advance(0.25).unwrap().phase - 0.25).abs() < 1e-15);
        let c = GaitClock::new(1.0, 0.9).unwrap();
        assert!((c.advance(0.2).unwrap().phase - 0.1).abs() < 1e-12);
        let half = GaitClock::new(1.0, 0.0).unwrap().advance(0.5).unwrap().clock_signal();
        assert!(half[0].abs() < 1e-12);
        assert!((half[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn advance_rejects_bad_inputs() {
        let bad = GaitClock { cycle_time: 0.0, phase: 0.0 };
        assert!(matches!(phase_advance(bad, 0.1), Err(Error::Config { .. })));
        assert!(GaitClock::new(-1.0, 0.0).is_err());
        let ok = GaitClock::new(1.0, 0.0).unwrap();
        assert!(ok.advance(-0.1).is_err());
    }

    #[test]
    fn stance_mask_halves() {
        let m = |p| stance_mask(&GaitClock::new(1.0, p).unwrap());
        assert_eq!(m(0.25), StanceMask { left: true, right: false });
        assert_eq!(m(0.75), StanceMask { left: false, right: true });
        assert_eq!(m(0.5), StanceMask { left: false, right: true });
        assert_eq!(m(0.0), StanceMask { left: true, right: false });
    }

    #[test]
    fn reproduces_published_coefficients() {
        let c = paper_coeffs().0;
        let want = [0.0, 0.1, 5.0, -18.8, 12.0, 9.6];
        for (g, w) in c.iter().zip(want) {
            assert!((g - w).abs() < 1e-9, "{c:?}");
        }
    }

    #[test]
    fn paper_trajectory_key_points() {
        let c = paper_coeffs();
        assert!((eval_quintic(&c, 0.25).0 - 0.1).abs() < 1e-12);
        let (h, v, _) = eval_quintic(&c, 0.5);
        assert!(h.abs() < 1e-12 && v.abs() < 1e-12);
        assert_eq!(eval_quintic(&QuinticCoeffs::default(), 3.7), (0.0, 0.0, 0.0));
    }

    #[test]
    fn zero_constraints_give_zero_polynomial() {
        let c = QuinticConstraints { h0: 0.0, v0: 0.0, acc0: 0.0, h_max: 0.0, h_swing: 0.0, v_swing: 0.0, duration: 1.0 };
        assert_eq!(solve_quintic(&c).unwrap().0, [0.0; 6]);
    }

    #[test]
    fn zero_duration_is_singular() {
        let c = QuinticConstraints { duration: 0.0, ..Default::default() };
        assert_eq!(solve_quintic(&c), Err(Error::Singular));
    }

    #[test]
    fn foot_reference_swing_and_stance() {
        let coeffs = paper_coeffs();
        // Left just entered swing.
        let r = foot_reference(&GaitClock::new(1.0, 0.5 + 1e-9).unwrap(), &coeffs, 0.5);
        assert!(r.left.0.abs() < 1e-9);
        assert!((r.left.1 - 0.1).abs() < 1e-6);
        assert_eq!(r.right, (0.0, 0.0));
        // Mid-swing of the right foot.
        let r = foot_reference(&GaitClock::new(1.0, 0.25).unwrap(), &coeffs, 0.5);
        assert!((r.right.0 - 0.1).abs() < 1e-12);
        assert_eq!(r.left, (0.0, 0.0));
    }

    proptest! {
        #[test]
        fn round_trip_constraints(
            h0 in -0.2f64..0.2, v0 in -1.0f64..1.0, acc0 in -20.0f64..20.0,
            h_max in -0.3f64..0.3, h_swing in -0.2f64..0.2, v_swing in -1.0f64..1.0,
            duration in 0.1f64..2.0,
        ) {
            let c = QuinticConstraints { h0, v0, acc0, h_max, h_swing, v_swing, duration };
            let q = solve_quintic(&c).unwrap();
            let (f0, d0, a0) = eval_quintic(&q, 0.0);
            let (fm, _, _) = eval_quintic(&q, duration / 2.0);
            let (ft, dt, _) = eval_quintic(&q, duration);
            for (got, want) in [(f0, h0), (d0, v0), (a0, acc0), (fm, h_max), (ft, h_swing), (dt, v_swing)] {
                prop_assert!((got - want).abs() < 1e-9, "{got} vs {want}");
            }
        }

        #[test]
        fn clock_on_unit_circle_and_mask_periodic(phase in 0.0f64..1.0, dt in 0.0f64..10.0) {
            let c = GaitClock::new(0.8, phase).unwrap();
            let s = c.clock_signal();
            prop_assert!((s[0] * s[0] + s[1] * s[1] - 1.0).abs() < 1e-12);
            let m = stance_mask(&c);
            prop_assert!(m.left != m.right);
            let n = c.advance(dt).unwrap();
            prop_assert!((0.0..1.0).contains(&n.phase));
            let full = c.advance(0.8).unwrap();
            if (full.phase - c.phase).abs() < 1e-9 {
                prop_assert_eq!(stance_mask(&full), m);
            }
        }
    }
}
