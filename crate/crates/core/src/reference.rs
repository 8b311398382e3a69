//! Reference windows for the controller: a fixed relative point, or a
//! pre-computed minimum-jerk relative trajectory with attitudes from
//! multicopter differential flatness.

use nalgebra::{DMatrix, Dyn, OMatrix, U3};

use crate::dynamics::{idx, StateVector};
use crate::error::{Error, Result};
use crate::geom::{Mat3, Quat, Vec3};

/// One reference point; the target-measurement entries are always zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceState {
    pub p: Vec3,
    pub v: Vec3,
    pub q: Quat,
}

impl ReferenceState {
    pub fn hold(p: Vec3) -> Self {
        Self { p, v: Vec3::zeros(), q: Quat::IDENTITY }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(idx::P).copy_from(&self.p);
        x.fixed_rows_mut::<3>(idx::V).copy_from(&self.v);
        x.fixed_rows_mut::<4>(idx::Q).copy_from(&self.q.to_vector4());
        x
    }
}

/// `N + 1` reference states spanning one prediction horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceWindow {
    pub states: Vec<ReferenceState>,
}

impl ReferenceWindow {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn first(&self) -> &ReferenceState {
        &self.states[0]
    }
}

pub fn fixed_point_window(p: Vec3, horizon: usize) -> ReferenceWindow {
    assert!(horizon >= 1);
    ReferenceWindow { states: vec![ReferenceState::hold(p); horizon + 1] }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryConditions {
    pub p0: Vec3,
    pub v0: Vec3,
    pub a0: Vec3,
    pub p1: Vec3,
    pub v1: Vec3,
    pub a1: Vec3,
}

impl BoundaryConditions {
    /// Start and end at rest.
    pub fn rest_to_rest(p0: Vec3, p1: Vec3) -> Self {
        let z = Vec3::zeros();
        Self { p0, v0: z, a0: z, p1, v1: z, a1: z }
    }
}

/// Quintic polynomial piece in local time `tau ∈ [0, duration]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub coeffs: [Vec3; 6],
    pub duration: f64,
}

impl Segment {
    /// Derivative `order` (0..=3) at local time `tau`.
    pub fn derivative(&self, order: usize, tau: f64) -> Vec3 {
        let mut out = Vec3::zeros();
        let mut pow = 1.0;
        for j in order..6 {
            out += self.coeffs[j] * (falling(j, order) * pow);
            pow *= tau;
        }
        out
    }
}

/// `j! / (j - d)!`
fn falling(j: usize, d: usize) -> f64 {
    ((j - d + 1)..=j).map(|k| k as f64).product()
}

/// Piecewise quintic minimizing integrated squared jerk.
#[derive(Clone, Debug, PartialEq)]
pub struct MinJerkTrajectory {
    pub segments: Vec<Segment>,
    pub boundary: BoundaryConditions,
}

const SAMPLES_PER_SEGMENT: usize = 1000;

impl MinJerkTrajectory {
    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    fn locate(&self, t: f64) -> (&Segment, f64) {
        let mut start = 0.0;
        let last = self.segments.len() - 1;
        for (i, seg) in self.segments.iter().enumerate() {
            if t < start + seg.duration || i == last {
                return (seg, (t - start).clamp(0.0, seg.duration));
            }
            start += seg.duration;
        }
        unreachable!()
    }

    /// Position, velocity, acceleration and jerk at `t`, clamped to the
    /// trajectory's time span.
    pub fn evaluate(&self, t: f64) -> (Vec3, Vec3, Vec3, Vec3) {
        let (seg, tau) = self.locate(t.max(0.0));
        (seg.derivative(0, tau), seg.derivative(1, tau), seg.derivative(2, tau), seg.derivative(3, tau))
    }

    /// Sampled maxima of `|v|` and `|a|`.
    pub fn peak_speed_accel(&self) -> (f64, f64) {
        let mut vmax: f64 = 0.0;
        let mut amax: f64 = 0.0;
        for seg in &self.segments {
            for i in 0..=SAMPLES_PER_SEGMENT {
                let tau = seg.duration * i as f64 / SAMPLES_PER_SEGMENT as f64;
                vmax = vmax.max(seg.derivative(1, tau).norm());
                amax = amax.max(seg.derivative(2, tau).norm());
            }
        }
        (vmax, amax)
    }

    /// Uniformly stretches time by `factor`.
    pub fn dilate(&self, factor: f64) -> Self {
        let segments = self
            .segments
            .iter()
            .map(|s| {
                let mut coeffs = s.coeffs;
                let mut scale = 1.0;
                for c in coeffs.iter_mut() {
                    *c /= scale;
                    scale *= factor;
                }
                Segment { coeffs, duration: s.duration * factor }
            })
            .collect();
        let b = self.boundary;
        Self {
            segments,
            boundary: BoundaryConditions {
                v0: b.v0 / factor,
                a0: b.a0 / (factor * factor),
                v1: b.v1 / factor,
                a1: b.a1 / (factor * factor),
                ..b
            },
        }
    }
}

/// Solves for the minimum-jerk piecewise quintic through `waypoints` with the
/// given per-segment `durations`.
///
/// Interior junctions interpolate the waypoint and keep derivatives 1..=4
/// continuous, which are the optimality conditions of the jerk functional.
pub fn min_jerk(boundary: BoundaryConditions, waypoints: &[Vec3], durations: &[f64]) -> Result<MinJerkTrajectory> {
    if let Some(&d) = durations.iter().find(|d| d.is_nan() || **d <= 0.0 || !d.is_finite()) {
        return Err(Error::NonPositiveDuration(d));
    }
    let m = durations.len();
    if m == 0 || waypoints.len() + 1 != m {
        return Err(Error::WaypointCountMismatch { segments: m.max(1), waypoints: waypoints.len() });
    }
    let n = 6 * m;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = OMatrix::<f64, Dyn, U3>::zeros(n);
    let mut row = 0;
    let set_rhs = |b: &mut OMatrix<f64, Dyn, U3>, r: usize, v: &Vec3| {
        b.row_mut(r).copy_from(&v.transpose());
    };

    // start conditions
    for (d, v) in [boundary.p0, boundary.v0, boundary.a0].iter().enumerate() {
        a[(row, d)] = falling(d, d);
        set_rhs(&mut b, row, v);
        row += 1;
    }
    for (i, wp) in waypoints.iter().enumerate() {
        let t = durations[i];
        let (c, nc) = (6 * i, 6 * (i + 1));
        for j in 0..6 {
            a[(row, c + j)] = t.powi(j as i32);
        }
        set_rhs(&mut b, row, wp);
        row += 1;
        a[(row, nc)] = 1.0;
        set_rhs(&mut b, row, wp);
        row += 1;
        for d in 1..=4 {
            for j in d..6 {
                a[(row, c + j)] = falling(j, d) * t.powi((j - d) as i32);
            }
            a[(row, nc + d)] = -falling(d, d);
            row += 1;
        }
    }
    let t = durations[m - 1];
    let c = 6 * (m - 1);
    for (d, v) in [boundary.p1, boundary.v1, boundary.a1].iter().enumerate() {
        for j in d..6 {
            a[(row, c + j)] = falling(j, d) * t.powi((j - d) as i32);
        }
        set_rhs(&mut b, row, v);
        row += 1;
    }
    debug_assert_eq!(row, n);

    let x = a.lu().solve(&b).ok_or(Error::NonFinite)?;
    let segments = (0..m)
        .map(|i| {
            let mut coeffs = [Vec3::zeros(); 6];
            for (j, c) in coeffs.iter_mut().enumerate() {
                *c = x.row(6 * i + j).transpose();
            }
            Segment { coeffs, duration: durations[i] }
        })
        .collect();
    Ok(MinJerkTrajectory { segments, boundary })
}

/// Slows the trajectory down uniformly by the smallest factor (at least 1)
/// that keeps sampled speed and acceleration within the limits.
pub fn scale_to_limits(traj: &MinJerkTrajectory, v_max: f64, a_max: f64) -> MinJerkTrajectory {
    assert!(v_max > 0.0 && a_max > 0.0);
    let (v, a) = traj.peak_speed_accel();
    let factor = 1f64.max(v / v_max).max((a / a_max).sqrt());
    if factor == 1.0 {
        traj.clone()
    } else {
        traj.dilate(factor)
    }
}

/// Attitude whose thrust axis produces `a_ref` against gravity, with the
/// given yaw. The frame is treated as level with gravity along `-z`.
pub fn flat_attitude(a_ref: &Vec3, yaw: f64, g: f64) -> Result<Quat> {
    let thrust = a_ref + Vec3::new(0.0, 0.0, g);
    let n = thrust.norm();
    if n.is_nan() || n <= 1e-6 {
        return Err(Error::DegenerateThrust(n));
    }
    let zb = thrust / n;
    let (s, c) = yaw.sin_cos();
    let xc = Vec3::new(c, s, 0.0);
    let cross = zb.cross(&xc);
    let (xb, yb) = if cross.norm() > 1e-6 {
        let yb = cross.normalize();
        (yb.cross(&zb), yb)
    } else {
        let yc = Vec3::new(-s, c, 0.0);
        let xb = yc.cross(&zb).normalize();
        (xb, zb.cross(&xb))
    };
    Quat::from_rotation(&Mat3::from_columns(&[xb, yb, zb]))
}

/// How reference attitudes are attached to sampled positions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AttitudeRule {
    /// Identity attitude everywhere.
    Level,
    /// Differential flatness with fixed yaw.
    Flat { yaw: f64, g: f64 },
}

pub fn reference_at(traj: &MinJerkTrajectory, rule: AttitudeRule, t: f64) -> Result<ReferenceState> {
    let t = t.min(traj.duration());
    let (p, v, a, _) = traj.evaluate(t);
    let q = match rule {
        AttitudeRule::Level => Quat::IDENTITY,
        AttitudeRule::Flat { yaw, g } => flat_attitude(&a, yaw, g)?,
    };
    Ok(ReferenceState { p, v, q })
}

/// Samples `N + 1` states at `t0 + k dt`; times past the end hold the
/// terminal state.
pub fn sample_window(
    traj: &MinJerkTrajectory,
    rule: AttitudeRule,
    t0: f64,
    dt: f64,
    horizon: usize,
) -> Result<ReferenceWindow> {
    assert!(dt > 0.0);
    let states = (0..=horizon).map(|k| reference_at(traj, rule, t0 + k as f64 * dt)).collect::<Result<_>>()?;
    Ok(ReferenceWindow { states })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rest_to_rest() -> MinJerkTrajectory {
        min_jerk(BoundaryConditions::rest_to_rest(Vec3::new(-4.0, 0.0, 2.0), Vec3::zeros()), &[], &[4.0]).unwrap()
    }

    #[test]
    fn fixed_point() {
        let w = fixed_point_window(Vec3::new(0.0, 0.0, 2.0), 20);
        assert_eq!(w.states.len(), 21);
        assert!(w.states.iter().all(|s| *s == ReferenceState::hold(Vec3::new(0.0, 0.0, 2.0))));
        let x = w.states[0].to_vector();
        assert_eq!(x[idx::Q], 1.0);
        assert_eq!(x.fixed_rows::<9>(idx::A_MEAS).norm(), 0.0);
        let w = fixed_point_window(Vec3::new(-1.0, 0.0, 2.0), 1);
        assert_eq!(w.states.len(), 2);
        assert_eq!(w.states[0], w.states[1]);
    }

    #[test]
    fn rest_to_rest_matches_closed_form() {
        let traj = rest_to_rest();
        let (p0, p1) = (Vec3::new(-4.0, 0.0, 2.0), Vec3::zeros());
        let d = p1 - p0;
        for i in 0..=40 {
            let t = 0.1 * i as f64;
            let s = t / 4.0;
            let shape = 10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5);
            let (p, _, _, _) = traj.evaluate(t);
            assert!((p - (p0 + d * shape)).norm() < 1e-9);
        }
        let (p, v, a, _) = traj.evaluate(0.0);
        assert!((p - p0).norm() < 1e-9 && v.norm() < 1e-9 && a.norm() < 1e-9);
        let (p, v, a, _) = traj.evaluate(4.0);
        assert!((p - p1).norm() < 1e-9 && v.norm() < 1e-9 && a.norm() < 1e-9);
        // peak speed at the midpoint
        let (_, v, _, _) = traj.evaluate(2.0);
        assert!((v.x - 1.875 * 4.0 / 4.0).abs() < 1e-9);
        assert!((v.z - 1.875 * -2.0 / 4.0).abs() < 1e-9);
    }

    #[test]
    fn junction_continuity() {
        let traj = min_jerk(
            BoundaryConditions::rest_to_rest(Vec3::new(-3.0, 1.0, 2.0), Vec3::zeros()),
            &[Vec3::new(-1.0, -0.5, 1.5)],
            &[2.0, 3.0],
        )
        .unwrap();
        let (a, b) = (&traj.segments[0], &traj.segments[1]);
        for d in 0..=2 {
            assert!((a.derivative(d, a.duration) - b.derivative(d, 0.0)).norm() < 1e-9, "order {d}");
        }
        assert!((a.derivative(0, 2.0) - Vec3::new(-1.0, -0.5, 1.5)).norm() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let bc = BoundaryConditions::rest_to_rest(Vec3::zeros(), Vec3::x());
        assert!(matches!(min_jerk(bc, &[], &[0.0]), Err(Error::NonPositiveDuration(_))));
        assert!(matches!(min_jerk(bc, &[], &[-1.0]), Err(Error::NonPositiveDuration(_))));
        assert!(matches!(min_jerk(bc, &[Vec3::y()], &[1.0]), Err(Error::WaypointCountMismatch { .. })));
        assert!(min_jerk(bc, &[], &[]).is_err());
    }

    #[test]
    fn scaling_laws() {
        let traj = rest_to_rest();
        assert_eq!(scale_to_limits(&traj, 100.0, 100.0), traj);

        let (v, a) = traj.peak_speed_accel();
        let slow = traj.dilate(2.0);
        let (v2, a2) = slow.peak_speed_accel();
        assert!((v2 - v / 2.0).abs() < 1e-12);
        assert!((a2 - a / 4.0).abs() < 1e-12);
        assert!((slow.duration() - 8.0).abs() < 1e-12);

        let fast =
            min_jerk(BoundaryConditions::rest_to_rest(Vec3::zeros(), Vec3::new(4.0, 0.0, 0.0)), &[], &[1.0]).unwrap();
        let scaled = scale_to_limits(&fast, 1.875, 100.0);
        assert!((scaled.duration() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn flat_attitudes() {
        let g = 9.8;
        assert!(
            (flat_attitude(&Vec3::zeros(), 0.0, g).unwrap().to_vector4() - Quat::IDENTITY.to_vector4()).norm() < 1e-12
        );
        let q = flat_attitude(&Vec3::new(g, 0.0, 0.0), 0.0, g).unwrap();
        let z = q.rotate(&Vec3::z());
        let h = 0.5f64.sqrt();
        assert!((z - Vec3::new(h, 0.0, h)).norm() < 1e-12);
        let expected = Quat::from_axis_angle(&Vec3::y(), std::f64::consts::FRAC_PI_4);
        assert!(q.angle_to(&expected) < 1e-7);
        assert!(matches!(flat_attitude(&Vec3::new(0.0, 0.0, -g), 0.0, g), Err(Error::DegenerateThrust(_))));
    }

    #[test]
    fn window_sampling() {
        let traj = rest_to_rest();
        let w = sample_window(&traj, AttitudeRule::Level, 0.0, 0.1, 20).unwrap();
        assert!((w.states[0].p - Vec3::new(-4.0, 0.0, 2.0)).norm() < 1e-12);
        assert_eq!(w.states[0].v, Vec3::zeros());
        let late = sample_window(&traj, AttitudeRule::Flat { yaw: 0.0, g: 9.8 }, 10.0, 0.1, 20).unwrap();
        assert!(late.states.iter().all(|s| s.p.norm() < 1e-9 && s.v.norm() < 1e-9));
        // sampled velocities are the analytic derivative
        let w = sample_window(&traj, AttitudeRule::Level, 1.0, 0.1, 20).unwrap();
        for (k, s) in w.states.iter().enumerate() {
            let t = 1.0 + 0.1 * k as f64;
            assert_eq!(s.v, traj.segments[0].derivative(1, t));
        }
    }
}
