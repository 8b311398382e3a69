//! Self-checks of the models against independent computations, runnable from
//! the command line.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{
    driven_step_with, idx, relative_rhs, rk4_step_vector, sensitivities, ControlInput, FrameMotion, InputVector,
    RelVector, RelativeState, StateVector, GRAVITY, INPUT_DIM, REL_DIM, STATE_DIM,
};
use crate::geom::{Quat, Vec3};
use crate::reference::{min_jerk, BoundaryConditions};
use crate::target::{imu_from_state, observe_relative, world_from_relative, MotionKind, TargetMotion, TargetState};
use crate::world::{world_rk4, WorldState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub bound: Bound,
}

impl Check {
    fn at_most(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self { name, value, tolerance, bound: Bound::AtMost }
    }

    fn at_least(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self { name, value, tolerance, bound: Bound::AtLeast }
    }

    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::AtMost => self.value <= self.tolerance,
            Bound::AtLeast => self.value >= self.tolerance,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (status, op) = match (self.passed(), self.bound) {
            (true, Bound::AtMost) => ("PASS", "<="),
            (true, Bound::AtLeast) => ("PASS", ">="),
            (false, Bound::AtMost) => ("FAIL", "> "),
            (false, Bound::AtLeast) => ("FAIL", "< "),
        };
        write!(f, "{status}  {:<28} {:.3e} {op} {:.3e}", self.name, self.value, self.tolerance)
    }
}

fn random_motion(case: usize, rng: &mut impl Rng) -> TargetMotion {
    let origin = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 0.0);
    let heading = rng.random_range(-3.0..3.0);
    let speed = rng.random_range(0.3..2.0);
    let kind = match case % 3 {
        0 => MotionKind::Static,
        1 => {
            let w: f64 = rng.random_range(0.2..2.0);
            MotionKind::Circular { speed, yaw_rate: if rng.random_bool(0.5) { w } else { -w } }
        }
        _ => MotionKind::SShape { amplitude: rng.random_range(0.3..1.5), period: rng.random_range(2.0..8.0), speed },
    };
    TargetMotion::new(kind, origin, heading)
}

fn random_relative(rng: &mut impl Rng) -> RelativeState {
    RelativeState {
        p: Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.0..3.0)),
        v: Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        q: Quat::from_axis_angle(
            &Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            rng.random_range(-0.5..0.5),
        ),
        ..Default::default()
    }
}

fn random_input(rng: &mut impl Rng) -> InputVector {
    InputVector::new(
        rng.random_range(5.0..15.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
}

/// Worst discrepancy between integrating the relative model and transforming
/// an independent world-frame simulation into the target frame, over `cases`
/// random 2 s runs at a 1 ms step. Position in m, quaternion componentwise.
///
/// `rhs` is the relative right-hand side under test.
pub fn oracle_equivalence(
    cases: usize,
    seed: u64,
    rhs: impl Fn(&RelVector, &InputVector, &FrameMotion) -> RelVector + Copy,
) -> Check {
    const DT: f64 = 1e-3;
    const STEPS: usize = 2000;
    const HOLD: usize = 100;
    let g = GRAVITY;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let motion = random_motion(case, &mut rng);
        let rel0 = random_relative(&mut rng);
        let mut agent = world_from_relative(&rel0, &motion.state(0.0));
        let mut s: RelVector = rel0.to_vector().fixed_rows::<REL_DIM>(0).into();
        let frame_at = |t: f64| motion.state(t).frame_motion(g);
        let mut u = random_input(&mut rng);
        for k in 0..STEPS {
            if k % HOLD == 0 {
                u = random_input(&mut rng);
            }
            let t = k as f64 * DT;
            s = driven_step_with(rhs, &s, &u, t, DT, frame_at);
            agent = world_rk4(&agent, &ControlInput::from_vector(&u), DT, g);
            let truth = observe_relative::<ChaCha8Rng>(&agent, &motion.state(t + DT), g, None);
            let q = Quat::from_vector4(&s.fixed_rows::<4>(idx::Q).into()).aligned_to(&truth.q);
            let dp = (s.fixed_rows::<3>(idx::P) - truth.p).amax();
            let dq = (q.to_vector4() - truth.q.to_vector4()).amax();
            let d = dp.max(dq);
            worst = if d.is_nan() { f64::INFINITY } else { worst.max(d) };
        }
    }
    Check::at_most("oracle_equivalence", worst, 1e-6)
}

fn observed_order(run: impl Fn(f64) -> Vec3) -> f64 {
    let (a, b, c) = (run(0.1), run(0.05), run(0.025));
    ((a - b).norm() / (b - c).norm()).log2()
}

/// Richardson estimate of the convergence order of both integrators.
pub fn integration_order() -> Vec<Check> {
    let x0 = RelativeState {
        p: Vec3::new(-1.0, 0.5, 2.0),
        v: Vec3::new(0.3, -0.2, 0.1),
        q: Quat::from_axis_angle(&Vec3::new(1.0, 2.0, 0.5), 0.4),
        a_meas: Vec3::new(0.0, 0.5, GRAVITY),
        omega_meas: Vec3::new(0.0, 0.0, 0.5),
        beta: Vec3::new(0.0, 0.0, 0.2),
    }
    .to_vector();
    let u = InputVector::new(11.0, 0.6, -0.8, 0.3);
    let relative = observed_order(|h| {
        let n = (2.0 / h).round() as usize;
        let x = (0..n).fold(x0, |x, _| rk4_step_vector(&x, &u, h));
        x.fixed_rows::<3>(idx::P).into()
    });
    let w0 = WorldState {
        velocity: Vec3::new(0.4, 0.1, -0.3),
        attitude: Quat::from_axis_angle(&Vec3::new(1.0, 2.0, 0.5), 0.4),
        ..Default::default()
    };
    let cu = ControlInput::from_vector(&u);
    let world = observed_order(|h| {
        let n = (2.0 / h).round() as usize;
        (0..n).fold(w0, |x, _| world_rk4(&x, &cu, h, GRAVITY)).position
    });
    vec![Check::at_least("rk4_order_relative", relative, 3.8), Check::at_least("rk4_order_world", world, 3.8)]
}

/// Relative acceleration from the IMU-substituted model against the same
/// quantity assembled from world-frame ground truth.
pub fn imu_substitution(samples: usize, seed: u64) -> Check {
    let g = GRAVITY;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let target = TargetState {
            position: Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 0.0),
            velocity: Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 0.0),
            acceleration: Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 0.0),
            yaw: rng.random_range(-3.0..3.0),
            yaw_rate: rng.random_range(-2.0..2.0),
            yaw_accel: rng.random_range(-1.0..1.0),
        };
        let agent = WorldState {
            position: target.position
                + Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..3.0)),
            velocity: Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)),
            attitude: Quat::from_axis_angle(
                &Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0),
                rng.random_range(-0.7..0.7),
            ),
        };
        let u = random_input(&mut rng);

        // world truth: agent and target accelerations, rotated into N with
        // the frame terms added
        let q_nw = target.attitude().conjugate();
        let rel = observe_relative::<ChaCha8Rng>(&agent, &target, g, None);
        let omega = target.omega();
        let beta = target.beta();
        let agent_acc = agent.attitude.rotate(&Vec3::new(0.0, 0.0, u[0])) - Vec3::new(0.0, 0.0, g);
        let truth = q_nw.rotate(&(agent_acc - target.acceleration))
            - beta.cross(&rel.p)
            - 2.0 * omega.cross(&rel.v)
            - omega.cross(&omega.cross(&rel.p));

        let imu = imu_from_state(&target, 0.0, g);
        let frame = FrameMotion { a_meas: imu.a_meas, omega: imu.omega_meas, beta };
        let s: RelVector = rel.to_vector().fixed_rows::<REL_DIM>(0).into();
        let model: Vec3 = relative_rhs(&s, &u, &frame).fixed_rows::<3>(idx::V).into();
        worst = worst.max((model - truth).amax());
    }
    Check::at_most("imu_substitution", worst, 1e-9)
}

/// Analytic step Jacobians against central differences.
pub fn sensitivity_accuracy(samples: usize, seed: u64) -> Check {
    const H: f64 = 1e-6;
    let dt = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let mut x = random_relative(&mut rng);
        x.a_meas = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), GRAVITY);
        x.omega_meas = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        x.beta = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let x = x.to_vector();
        let u = random_input(&mut rng);
        let (ax, bu) = sensitivities(&x, &u, dt);
        for j in 0..STATE_DIM {
            let mut e = StateVector::zeros();
            e[j] = H;
            let fd = (rk4_step_vector(&(x + e), &u, dt) - rk4_step_vector(&(x - e), &u, dt)) / (2.0 * H);
            worst = worst.max((fd - ax.column(j)).amax());
        }
        for j in 0..INPUT_DIM {
            let mut e = InputVector::zeros();
            e[j] = H;
            let fd = (rk4_step_vector(&x, &(u + e), dt) - rk4_step_vector(&x, &(u - e), dt)) / (2.0 * H);
            worst = worst.max((fd - bu.column(j)).amax());
        }
    }
    Check::at_most("sensitivities_vs_fd", worst, 1e-4)
}

/// Boundary, junction and closed-form checks of the trajectory generator.
pub fn trajectory_generator() -> Vec<Check> {
    let start = Vec3::new(-3.0, 1.0, 2.0);
    let bc = BoundaryConditions {
        p0: start,
        v0: Vec3::new(0.2, 0.0, -0.1),
        a0: Vec3::new(0.0, 0.1, 0.0),
        p1: Vec3::zeros(),
        v1: Vec3::zeros(),
        a1: Vec3::zeros(),
    };
    let wps = [Vec3::new(-2.0, 0.0, 1.8), Vec3::new(-1.0, -0.5, 1.0)];
    let traj = min_jerk(bc, &wps, &[2.0, 1.5, 2.5]).expect("valid durations");
    let first = &traj.segments[0];
    let last = traj.segments.last().expect("three segments");
    let boundary = [
        (first.derivative(0, 0.0) - bc.p0).amax(),
        (first.derivative(1, 0.0) - bc.v0).amax(),
        (first.derivative(2, 0.0) - bc.a0).amax(),
        (last.derivative(0, last.duration) - bc.p1).amax(),
        (last.derivative(1, last.duration) - bc.v1).amax(),
        (last.derivative(2, last.duration) - bc.a1).amax(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let mut junction: f64 = 0.0;
    for (i, pair) in traj.segments.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        junction = junction.max((a.derivative(0, a.duration) - wps[i]).amax());
        for d in 0..=2 {
            junction = junction.max((a.derivative(d, a.duration) - b.derivative(d, 0.0)).amax());
        }
    }

    let (p0, p1, t) = (Vec3::new(-4.0, 0.0, 2.0), Vec3::zeros(), 4.0);
    let rest = min_jerk(BoundaryConditions::rest_to_rest(p0, p1), &[], &[t]).expect("valid duration");
    let (_, v_mid, _, _) = rest.evaluate(t / 2.0);
    let expected = 1.875 * (p1 - p0) / t;
    let peak = (0..3)
        .filter(|&i| expected[i] != 0.0)
        .map(|i| ((v_mid[i] - expected[i]) / expected[i]).abs())
        .fold(0.0, f64::max);

    vec![
        Check::at_most("min_jerk_boundary", boundary, 1e-9),
        Check::at_most("min_jerk_junction_c2", junction, 1e-9),
        Check::at_most("min_jerk_peak_speed_rel", peak, 1e-6),
    ]
}

pub fn run_all() -> Vec<Check> {
    let mut checks = vec![oracle_equivalence(50, 1, relative_rhs)];
    checks.extend(integration_order());
    checks.push(imu_substitution(100, 2));
    checks.push(sensitivity_accuracy(20, 3));
    checks.extend(trajectory_generator());
    checks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::skew;

    #[test]
    fn all_checks_pass() {
        for c in run_all() {
            assert!(c.passed(), "{c}");
        }
    }

    #[test]
    fn coriolis_sign_error_is_caught() {
        let mutated = |s: &RelVector, u: &InputVector, f: &FrameMotion| {
            let mut d = relative_rhs(s, u, f);
            let v: Vec3 = s.fixed_rows::<3>(idx::V).into();
            let wrong = d.fixed_rows::<3>(idx::V) + 4.0 * skew(&f.omega) * v;
            d.fixed_rows_mut::<3>(idx::V).copy_from(&wrong);
            d
        };
        let check = oracle_equivalence(6, 1, mutated);
        assert!(!check.passed());
        assert!(check.value > 1e-3);
        assert!(check.to_string().starts_with("FAIL"));
    }

    #[test]
    fn report_format() {
        let c = Check::at_most("x", 1.5e-9, 1e-6);
        assert_eq!(c.to_string(), format!("PASS  {:<28} 1.500e-9 <= 1.000e-6", "x"));
    }
}
