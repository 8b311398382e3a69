//! Quadrotor dynamics expressed in the moving target frame `N`.
//!
//! The state stacks the agent's pose and velocity relative to the target with
//! the target's inertial measurements:
//!
//! ```text
//! x = [p (3), v (3), q (4), a_meas (3), omega_meas (3), beta (3)]   (19)
//! u = [thrust, wx, wy, wz]                                           (4)
//!
//! dp/dt = v
//! dv/dt = -[beta]x p - 2 [omega]x v - [omega]x^2 p + R(q) (0, 0, T) - a_meas
//! dq/dt = -1/2 omega ⊙ q + 1/2 q ⊙ w_B
//! d(a_meas)/dt = 0, d(omega)/dt = beta, d(beta)/dt = 0
//! ```
//!
//! `a_meas` is the target's specific force (accelerometer output), which
//! already carries gravity; no world-frame quantity appears in the model.

use nalgebra::{Matrix4, SMatrix, SVector, Vector4};

use crate::geom::{skew, Mat3, Quat, Vec3};

pub const STATE_DIM: usize = 19;
pub const INPUT_DIM: usize = 4;
/// Pose/velocity part of the state (p, v, q).
pub const REL_DIM: usize = 10;
/// Target measurement part of the state (a_meas, omega_meas, beta).
pub const FRAME_DIM: usize = 9;

pub const GRAVITY: f64 = 9.8;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type InputVector = SVector<f64, INPUT_DIM>;
pub type RelVector = SVector<f64, REL_DIM>;

/// Index ranges into the flattened state.
pub mod idx {
    pub const P: usize = 0;
    pub const V: usize = 3;
    pub const Q: usize = 6;
    pub const A_MEAS: usize = 10;
    pub const OMEGA: usize = 13;
    pub const BETA: usize = 16;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeState {
    /// Agent position in the target frame, m.
    pub p: Vec3,
    /// Agent velocity relative to the target, in the target frame, m/s.
    pub v: Vec3,
    /// Agent attitude relative to the target (body to target).
    pub q: Quat,
    /// Target specific force, m/s^2.
    pub a_meas: Vec3,
    /// Target angular velocity, rad/s.
    pub omega_meas: Vec3,
    /// Target angular acceleration, rad/s^2.
    pub beta: Vec3,
}

impl Default for RelativeState {
    fn default() -> Self {
        Self {
            p: Vec3::zeros(),
            v: Vec3::zeros(),
            q: Quat::IDENTITY,
            a_meas: Vec3::new(0.0, 0.0, GRAVITY),
            omega_meas: Vec3::zeros(),
            beta: Vec3::zeros(),
        }
    }
}

impl RelativeState {
    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(idx::P).copy_from(&self.p);
        x.fixed_rows_mut::<3>(idx::V).copy_from(&self.v);
        x.fixed_rows_mut::<4>(idx::Q).copy_from(&self.q.to_vector4());
        x.fixed_rows_mut::<3>(idx::A_MEAS).copy_from(&self.a_meas);
        x.fixed_rows_mut::<3>(idx::OMEGA).copy_from(&self.omega_meas);
        x.fixed_rows_mut::<3>(idx::BETA).copy_from(&self.beta);
        x
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            p: x.fixed_rows::<3>(idx::P).into(),
            v: x.fixed_rows::<3>(idx::V).into(),
            q: Quat::from_vector4(&x.fixed_rows::<4>(idx::Q).into()),
            a_meas: x.fixed_rows::<3>(idx::A_MEAS).into(),
            omega_meas: x.fixed_rows::<3>(idx::OMEGA).into(),
            beta: x.fixed_rows::<3>(idx::BETA).into(),
        }
    }

    pub fn frame(&self) -> FrameMotion {
        FrameMotion { a_meas: self.a_meas, omega: self.omega_meas, beta: self.beta }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlInput {
    /// Mass-normalized collective thrust, m/s^2.
    pub thrust: f64,
    /// Body rates, rad/s.
    pub omega_b: Vec3,
}

impl ControlInput {
    pub fn new(thrust: f64, wx: f64, wy: f64, wz: f64) -> Self {
        Self { thrust, omega_b: Vec3::new(wx, wy, wz) }
    }

    pub fn hover(g: f64) -> Self {
        Self::new(g, 0.0, 0.0, 0.0)
    }

    pub fn to_vector(&self) -> InputVector {
        InputVector::new(self.thrust, self.omega_b.x, self.omega_b.y, self.omega_b.z)
    }

    pub fn from_vector(u: &InputVector) -> Self {
        Self::new(u[0], u[1], u[2], u[3])
    }
}

/// Motion of the target frame as seen by its own IMU.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameMotion {
    pub a_meas: Vec3,
    pub omega: Vec3,
    pub beta: Vec3,
}

impl FrameMotion {
    /// Target at rest on level ground.
    pub fn at_rest(g: f64) -> Self {
        Self { a_meas: Vec3::new(0.0, 0.0, g), omega: Vec3::zeros(), beta: Vec3::zeros() }
    }
}

fn quat_of(s: &RelVector) -> Quat {
    Quat::new(s[idx::Q], s[idx::Q + 1], s[idx::Q + 2], s[idx::Q + 3])
}

/// Third column of `R(q)` in the homogeneous form, valid off the unit sphere.
fn thrust_axis(q: &Quat) -> Vec3 {
    let Quat { w, x, y, z } = *q;
    Vec3::new(2.0 * (x * z + w * y), 2.0 * (y * z - w * x), w * w - x * x - y * y + z * z)
}

/// Time derivative of the pose/velocity part, with the frame motion given
/// externally.
pub fn relative_rhs(s: &RelVector, u: &InputVector, frame: &FrameMotion) -> RelVector {
    let p: Vec3 = s.fixed_rows::<3>(idx::P).into();
    let v: Vec3 = s.fixed_rows::<3>(idx::V).into();
    let q = quat_of(s);
    let om = &frame.omega;

    let accel =
        -frame.beta.cross(&p) - 2.0 * om.cross(&v) - om.cross(&om.cross(&p)) + thrust_axis(&q) * u[0] - frame.a_meas;
    let wb = Vec3::new(u[1], u[2], u[3]);
    let qdot = (Quat::pure(om) * q).scale(-0.5).add(&(q * Quat::pure(&wb)).scale(0.5));

    let mut ds = RelVector::zeros();
    ds.fixed_rows_mut::<3>(idx::P).copy_from(&v);
    ds.fixed_rows_mut::<3>(idx::V).copy_from(&accel);
    ds.fixed_rows_mut::<4>(idx::Q).copy_from(&qdot.to_vector4());
    ds
}

/// Partial derivatives of [`relative_rhs`] with respect to the pose part,
/// the frame motion `(a_meas, omega, beta)` and the input.
pub fn relative_jacobian(
    s: &RelVector,
    u: &InputVector,
    frame: &FrameMotion,
) -> (SMatrix<f64, REL_DIM, REL_DIM>, SMatrix<f64, REL_DIM, FRAME_DIM>, SMatrix<f64, REL_DIM, INPUT_DIM>) {
    let p: Vec3 = s.fixed_rows::<3>(idx::P).into();
    let v: Vec3 = s.fixed_rows::<3>(idx::V).into();
    let q = quat_of(s);
    let om = frame.omega;
    let t = u[0];
    let wb = Vec3::new(u[1], u[2], u[3]);
    let om_x = skew(&om);

    let mut js = SMatrix::<f64, REL_DIM, REL_DIM>::zeros();
    js.fixed_view_mut::<3, 3>(idx::P, idx::V).copy_from(&Mat3::identity());
    js.fixed_view_mut::<3, 3>(idx::V, idx::P).copy_from(&(-skew(&frame.beta) - om_x * om_x));
    js.fixed_view_mut::<3, 3>(idx::V, idx::V).copy_from(&(-2.0 * om_x));
    let Quat { w, x, y, z } = q;
    let d_axis = SMatrix::<f64, 3, 4>::new(
        2.0 * y,
        2.0 * z,
        2.0 * w,
        2.0 * x, //
        -2.0 * x,
        -2.0 * w,
        2.0 * z,
        2.0 * y, //
        2.0 * w,
        -2.0 * x,
        -2.0 * y,
        2.0 * z,
    );
    js.fixed_view_mut::<3, 4>(idx::V, idx::Q).copy_from(&(d_axis * t));
    let dq_dq: Matrix4<f64> = (Quat::pure(&wb).right_matrix() - Quat::pure(&om).left_matrix()) * 0.5;
    js.fixed_view_mut::<4, 4>(idx::Q, idx::Q).copy_from(&dq_dq);

    let mut jm = SMatrix::<f64, REL_DIM, FRAME_DIM>::zeros();
    // d(accel)/d(a_meas)
    jm.fixed_view_mut::<3, 3>(idx::V, 0).copy_from(&(-Mat3::identity()));
    // d(accel)/d(omega): -2 omega × v -> 2 [v]x ; -omega × (omega × p)
    let d_centripetal = om * p.transpose() + Mat3::identity() * om.dot(&p) - 2.0 * p * om.transpose();
    jm.fixed_view_mut::<3, 3>(idx::V, 3).copy_from(&(2.0 * skew(&v) - d_centripetal));
    // d(accel)/d(beta): -beta × p = [p]x beta
    jm.fixed_view_mut::<3, 3>(idx::V, 6).copy_from(&skew(&p));
    // d(qdot)/d(omega) = -1/2 R(q)[:, 1..4]
    let rq = q.right_matrix();
    jm.fixed_view_mut::<4, 3>(idx::Q, 3).copy_from(&(rq.fixed_columns::<3>(1) * -0.5));

    let mut ju = SMatrix::<f64, REL_DIM, INPUT_DIM>::zeros();
    ju.fixed_view_mut::<3, 1>(idx::V, 0).copy_from(&thrust_axis(&q));
    let lq = q.left_matrix();
    ju.fixed_view_mut::<4, 3>(idx::Q, 1).copy_from(&(lq.fixed_columns::<3>(1) * 0.5));
    (js, jm, ju)
}

fn split(x: &StateVector) -> (RelVector, FrameMotion) {
    let s = x.fixed_rows::<REL_DIM>(0).into();
    let frame = FrameMotion {
        a_meas: x.fixed_rows::<3>(idx::A_MEAS).into(),
        omega: x.fixed_rows::<3>(idx::OMEGA).into(),
        beta: x.fixed_rows::<3>(idx::BETA).into(),
    };
    (s, frame)
}

/// Full 19-dimensional right-hand side `dx/dt = f(x, u)`. Gravity enters
/// only through `a_meas`.
pub fn rhs_vector(x: &StateVector, u: &InputVector) -> StateVector {
    let (s, frame) = split(x);
    let ds = relative_rhs(&s, u, &frame);
    let mut dx = StateVector::zeros();
    dx.fixed_rows_mut::<REL_DIM>(0).copy_from(&ds);
    dx.fixed_rows_mut::<3>(idx::OMEGA).copy_from(&frame.beta);
    dx
}

pub fn rhs(x: &RelativeState, u: &ControlInput) -> RelativeState {
    RelativeState::from_vector(&rhs_vector(&x.to_vector(), &u.to_vector()))
}

fn normalize_quat(x: &mut StateVector) -> f64 {
    let n = x.fixed_rows::<4>(idx::Q).norm();
    x.fixed_rows_mut::<4>(idx::Q).unscale_mut(n);
    n
}

/// Classical RK4 step with the input held constant; the quaternion is
/// renormalized afterwards.
pub fn rk4_step_vector(x: &StateVector, u: &InputVector, dt: f64) -> StateVector {
    let k1 = rhs_vector(x, u);
    let k2 = rhs_vector(&(x + k1 * (0.5 * dt)), u);
    let k3 = rhs_vector(&(x + k2 * (0.5 * dt)), u);
    let k4 = rhs_vector(&(x + k3 * dt), u);
    let mut next = x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
    normalize_quat(&mut next);
    next
}

pub fn rk4_step(x: &RelativeState, u: &ControlInput, dt: f64) -> RelativeState {
    RelativeState::from_vector(&rk4_step_vector(&x.to_vector(), &u.to_vector(), dt))
}

/// RK4 step of the pose part with the frame motion supplied as a function of
/// time, evaluated at each stage time. Used when the target's measurements are
/// known along the whole step (ground truth), rather than extrapolated by the
/// constant-acceleration model.
pub fn rk4_step_driven(
    s: &RelVector,
    u: &InputVector,
    t: f64,
    dt: f64,
    frame_at: impl Fn(f64) -> FrameMotion,
) -> RelVector {
    driven_step_with(relative_rhs, s, u, t, dt, frame_at)
}

/// As [`rk4_step_driven`] with a caller-supplied right-hand side.
pub fn driven_step_with(
    f: impl Fn(&RelVector, &InputVector, &FrameMotion) -> RelVector,
    s: &RelVector,
    u: &InputVector,
    t: f64,
    dt: f64,
    frame_at: impl Fn(f64) -> FrameMotion,
) -> RelVector {
    let f0 = frame_at(t);
    let fm = frame_at(t + 0.5 * dt);
    let f1 = frame_at(t + dt);
    let k1 = f(s, u, &f0);
    let k2 = f(&(s + k1 * (0.5 * dt)), u, &fm);
    let k3 = f(&(s + k2 * (0.5 * dt)), u, &fm);
    let k4 = f(&(s + k3 * dt), u, &f1);
    let mut next = s + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
    let n = next.fixed_rows::<4>(idx::Q).norm();
    next.fixed_rows_mut::<4>(idx::Q).unscale_mut(n);
    next
}

fn full_jacobian(x: &StateVector, u: &InputVector) -> SMatrix<f64, STATE_DIM, { STATE_DIM + INPUT_DIM }> {
    let (s, frame) = split(x);
    let (js, jm, ju) = relative_jacobian(&s, u, &frame);
    let mut j = SMatrix::<f64, STATE_DIM, { STATE_DIM + INPUT_DIM }>::zeros();
    j.fixed_view_mut::<REL_DIM, REL_DIM>(0, 0).copy_from(&js);
    j.fixed_view_mut::<REL_DIM, FRAME_DIM>(0, REL_DIM).copy_from(&jm);
    j.fixed_view_mut::<REL_DIM, INPUT_DIM>(0, STATE_DIM).copy_from(&ju);
    j.fixed_view_mut::<3, 3>(idx::OMEGA, idx::BETA).copy_from(&Mat3::identity());
    j
}

/// Jacobian of the quaternion renormalization applied to the pre-normalized
/// quaternion `qt`.
fn normalization_jacobian(qt: &Vector4<f64>) -> Matrix4<f64> {
    let n = qt.norm();
    let qh = qt / n;
    (Matrix4::identity() - qh * qh.transpose()) / n
}

/// Exact Jacobians `(dx+/dx, dx+/du)` of [`rk4_step_vector`], propagated
/// through the four RK4 stages and the final renormalization.
pub fn sensitivities(
    x: &StateVector,
    u: &InputVector,
    dt: f64,
) -> (SMatrix<f64, STATE_DIM, STATE_DIM>, SMatrix<f64, STATE_DIM, INPUT_DIM>) {
    type Aug = SMatrix<f64, STATE_DIM, { STATE_DIM + INPUT_DIM }>;
    let mut id = Aug::zeros();
    id.fixed_view_mut::<STATE_DIM, STATE_DIM>(0, 0).fill_with_identity();

    let stage = |xs: &StateVector, z: &Aug| -> (StateVector, Aug) {
        let j = full_jacobian(xs, u);
        let jx = j.fixed_view::<STATE_DIM, STATE_DIM>(0, 0);
        let mut dk = jx * z;
        let mut ju = dk.fixed_view_mut::<STATE_DIM, INPUT_DIM>(0, STATE_DIM);
        ju += j.fixed_view::<STATE_DIM, INPUT_DIM>(0, STATE_DIM);
        (rhs_vector(xs, u), dk)
    };
    let (k1, d1) = stage(x, &id);
    let (k2, d2) = stage(&(x + k1 * (0.5 * dt)), &(id + d1 * (0.5 * dt)));
    let (k3, d3) = stage(&(x + k2 * (0.5 * dt)), &(id + d2 * (0.5 * dt)));
    let (k4, d4) = stage(&(x + k3 * dt), &(id + d3 * dt));
    let pre = x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
    let mut d = id + (d1 + (d2 + d3) * 2.0 + d4) * (dt / 6.0);

    let nj = normalization_jacobian(&pre.fixed_rows::<4>(idx::Q).into());
    let q_rows: SMatrix<f64, 4, { STATE_DIM + INPUT_DIM }> = d.fixed_rows::<4>(idx::Q).into();
    d.fixed_rows_mut::<4>(idx::Q).copy_from(&(nj * q_rows));

    (d.fixed_view::<STATE_DIM, STATE_DIM>(0, 0).into(), d.fixed_view::<STATE_DIM, INPUT_DIM>(0, STATE_DIM).into())
}

/// Result of [`step_with_pose_sensitivities`].
pub struct PoseStep {
    pub next: StateVector,
    /// d(pose+)/d(pose)
    pub a: SMatrix<f64, REL_DIM, REL_DIM>,
    /// d(pose+)/du
    pub b: SMatrix<f64, REL_DIM, INPUT_DIM>,
}

/// RK4 step together with the pose block of its Jacobians.
///
/// The measurement part of the state evolves independently of the pose and
/// the input, so `dx+/dx` is block triangular; the solver only needs the
/// pose-to-pose and pose-to-input blocks, which this computes at a fraction
/// of the cost of [`sensitivities`].
pub fn step_with_pose_sensitivities(x: &StateVector, u: &InputVector, dt: f64) -> PoseStep {
    type Aug = SMatrix<f64, REL_DIM, { REL_DIM + INPUT_DIM }>;
    let mut id = Aug::zeros();
    id.fixed_view_mut::<REL_DIM, REL_DIM>(0, 0).fill_with_identity();

    let stage = |xs: &StateVector, z: &Aug| -> (StateVector, Aug) {
        let (s, frame) = split(xs);
        let (js, _, ju) = relative_jacobian(&s, u, &frame);
        let mut dk = js * z;
        let mut dku = dk.fixed_view_mut::<REL_DIM, INPUT_DIM>(0, REL_DIM);
        dku += ju;
        (rhs_vector(xs, u), dk)
    };

    let (k1, d1) = stage(x, &id);
    let (k2, d2) = stage(&(x + k1 * (0.5 * dt)), &(id + d1 * (0.5 * dt)));
    let (k3, d3) = stage(&(x + k2 * (0.5 * dt)), &(id + d2 * (0.5 * dt)));
    let (k4, d4) = stage(&(x + k3 * dt), &(id + d3 * dt));
    let mut next = x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
    let mut d = id + (d1 + (d2 + d3) * 2.0 + d4) * (dt / 6.0);

    let nj = normalization_jacobian(&next.fixed_rows::<4>(idx::Q).into());
    let q_rows: SMatrix<f64, 4, { REL_DIM + INPUT_DIM }> = d.fixed_rows::<4>(idx::Q).into();
    d.fixed_rows_mut::<4>(idx::Q).copy_from(&(nj * q_rows));
    normalize_quat(&mut next);

    PoseStep {
        next,
        a: d.fixed_view::<REL_DIM, REL_DIM>(0, 0).into(),
        b: d.fixed_view::<REL_DIM, INPUT_DIM>(0, REL_DIM).into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut impl Rng) -> StateVector {
        let mut r = |s: f64| rng.random_range(-s..s);
        let q = Quat::new(1.0 + r(0.5), r(0.5), r(0.5), r(0.5)).normalize();
        RelativeState {
            p: Vec3::new(r(3.0), r(3.0), r(3.0)),
            v: Vec3::new(r(2.0), r(2.0), r(2.0)),
            q,
            a_meas: Vec3::new(r(2.0), r(2.0), GRAVITY + r(1.0)),
            omega_meas: Vec3::new(r(1.0), r(1.0), r(2.0)),
            beta: Vec3::new(r(0.5), r(0.5), r(0.5)),
        }
        .to_vector()
    }

    fn random_input(rng: &mut impl Rng) -> InputVector {
        InputVector::new(
            rng.random_range(2.0..20.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        )
    }

    #[test]
    fn hover_is_equilibrium() {
        let x = RelativeState::default();
        let d = rhs(&x, &ControlInput::hover(GRAVITY));
        assert!(d.to_vector().norm() < 1e-15);
        let next = rk4_step(&x, &ControlInput::hover(GRAVITY), 0.1);
        assert!((next.to_vector() - x.to_vector()).norm() < 1e-12);
    }

    #[test]
    fn equal_rates_leave_attitude_fixed() {
        let w = 0.7;
        let x = RelativeState { omega_meas: Vec3::new(0.0, 0.0, w), ..Default::default() };
        let d = rhs(&x, &ControlInput::new(GRAVITY, 0.0, 0.0, w));
        assert!(d.q.to_vector4().norm() < 1e-15);
    }

    #[test]
    fn circular_target_matches_planar_expansion() {
        // Target moving forward at `speed` with yaw rate `w`; agent at
        // p = (-r, 0, z) with world velocity `wn` (expressed in N). Expanded by
        // hand from the frame-change relations:
        //   v   = wn + (-speed, w r, 0)
        //   dv/dt = (2 w wn_y + w^2 r, -2 w wn_x + 2 w speed, 0) + R(q) T e3 - a_meas
        let (speed, w, r, z) = (1.0, 0.5, 1.0, 2.0);
        let wn = Vec3::new(0.3, -0.2, 0.1);
        let q = Quat::from_axis_angle(&Vec3::new(0.2, -0.4, 0.1), 0.3);
        let thrust = 11.0;
        let a_meas = Vec3::new(0.0, speed * w, GRAVITY);
        let x = RelativeState {
            p: Vec3::new(-r, 0.0, z),
            v: wn + Vec3::new(-speed, w * r, 0.0),
            q,
            a_meas,
            omega_meas: Vec3::new(0.0, 0.0, w),
            beta: Vec3::zeros(),
        };
        let d = rhs(&x, &ControlInput::new(thrust, 0.0, 0.0, 0.0));
        let rt = q.to_rotation() * Vec3::new(0.0, 0.0, thrust);
        let expected = Vec3::new(
            2.0 * w * wn.y + w * w * r + rt.x - a_meas.x,
            -2.0 * w * wn.x + 2.0 * w * speed + rt.y - a_meas.y,
            rt.z - 9.8,
        );
        assert!((d.v - expected).norm() < 1e-12, "{:?} vs {:?}", d.v, expected);
        assert_eq!(d.p, x.v);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x0 = random_state(&mut rng);
        let u = random_input(&mut rng);
        let run = |h: f64| {
            let n = (1.0 / h).round() as usize;
            (0..n).fold(x0, |x, _| rk4_step_vector(&x, &u, h))
        };
        let (a, b, c) = (run(0.05), run(0.025), run(0.0125));
        let order = ((a - b).norm() / (b - c).norm()).log2();
        assert!(order > 3.8, "observed order {order}");
    }

    fn central_difference(x: &StateVector, u: &InputVector, dt: f64) -> (SMatrix<f64, 19, 19>, SMatrix<f64, 19, 4>) {
        let h = 1e-6;
        let mut ax = SMatrix::<f64, 19, 19>::zeros();
        let mut bu = SMatrix::<f64, 19, 4>::zeros();
        for i in 0..19 {
            let mut e = StateVector::zeros();
            e[i] = h;
            let col = (rk4_step_vector(&(x + e), u, dt) - rk4_step_vector(&(x - e), u, dt)) / (2.0 * h);
            ax.set_column(i, &col);
        }
        for i in 0..4 {
            let mut e = InputVector::zeros();
            e[i] = h;
            let col = (rk4_step_vector(x, &(u + e), dt) - rk4_step_vector(x, &(u - e), dt)) / (2.0 * h);
            bu.set_column(i, &col);
        }
        (ax, bu)
    }

    #[test]
    fn sensitivities_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let x = random_state(&mut rng);
            let u = random_input(&mut rng);
            let (a, b) = sensitivities(&x, &u, 0.1);
            let (fa, fb) = central_difference(&x, &u, 0.1);
            assert!((a - fa).abs().max() < 1e-4, "A err {}", (a - fa).abs().max());
            assert!((b - fb).abs().max() < 1e-4, "B err {}", (b - fb).abs().max());

            let pose = step_with_pose_sensitivities(&x, &u, 0.1);
            assert_eq!(pose.next, rk4_step_vector(&x, &u, 0.1));
            assert!((pose.a - a.fixed_view::<10, 10>(0, 0)).abs().max() < 1e-12);
            assert!((pose.b - b.fixed_view::<10, 4>(0, 0)).abs().max() < 1e-12);
        }
    }

    #[test]
    fn thrust_sensitivity_at_hover() {
        let x = RelativeState::default().to_vector();
        let u = ControlInput::hover(GRAVITY).to_vector();
        let (_, b) = sensitivities(&x, &u, 0.1);
        let (_, fb) = central_difference(&x, &u, 0.1);
        let col = b.column(0);
        // vz responds most strongly to thrust
        let (imax, _) = col.iamax_full();
        assert_eq!(imax, idx::V + 2);
        assert!((col[idx::V + 2] - fb[(idx::V + 2, 0)]).abs() / fb[(idx::V + 2, 0)] < 1e-5);
    }

    #[test]
    fn sensitivities_tend_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random_state(&mut rng);
        let u = random_input(&mut rng);
        let (a, b) = sensitivities(&x, &u, 1e-9);
        // off the quaternion block the map is the identity up to O(dt);
        // the quaternion rows project onto the tangent of the unit sphere
        let qv: Vector4<f64> = x.fixed_rows::<4>(idx::Q).into();
        let mut expected = SMatrix::<f64, 19, 19>::identity();
        expected.fixed_view_mut::<4, 4>(idx::Q, idx::Q).copy_from(&(Matrix4::identity() - qv * qv.transpose()));
        assert!((a - expected).abs().max() < 1e-6);
        assert!(b.abs().max() < 1e-6);
    }

    #[test]
    fn quaternion_norm_stable_over_long_rollout() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut x = random_state(&mut rng);
        let u = random_input(&mut rng);
        for _ in 0..10_000 {
            x = rk4_step_vector(&x, &u, 0.01);
        }
        let n = x.fixed_rows::<4>(idx::Q).norm();
        assert!((n - 1.0).abs() < 1e-9);
    }
}
