//! Target (ground vehicle) motion, its IMU output, and relative observation.
//!
//! The target is a level vehicle: its attitude is a pure yaw rotation, so its
//! body rates are `(0, 0, yaw_rate)` and its accelerometer reads
//! `R_NW (a_W + g e_z)`.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{FrameMotion, RelativeState};
use crate::geom::{Quat, Vec3};
use crate::reference::MinJerkTrajectory;
use crate::world::WorldState;

/// Target trajectory shapes.
#[derive(Clone, Debug, PartialEq)]
pub enum MotionKind {
    Static,
    /// Constant forward speed (m/s) and yaw rate (rad/s); radius `speed / yaw_rate`.
    Circular {
        speed: f64,
        yaw_rate: f64,
    },
    /// Constant forward speed with yaw rate `amplitude * cos(2 pi t / period)`.
    SShape {
        amplitude: f64,
        period: f64,
        speed: f64,
    },
    /// Planar path following a spline, heading tangent to the velocity.
    Spline(MinJerkTrajectory),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetMotion {
    pub kind: MotionKind,
    /// Initial position in W.
    pub origin: Vec3,
    /// Initial heading in W, rad.
    pub heading: f64,
    /// Displacement over one full S-shape period (body frame at heading 0).
    period_shift: Vec3,
}

/// Kinematic state of the target in the world frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub yaw_accel: f64,
}

impl TargetState {
    /// Target to world.
    pub fn attitude(&self) -> Quat {
        Quat::from_yaw(self.yaw)
    }

    /// Angular velocity in N.
    pub fn omega(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.yaw_rate)
    }

    /// Angular acceleration in N.
    pub fn beta(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.yaw_accel)
    }

    /// True linear acceleration expressed in N.
    pub fn acceleration_in_target(&self) -> Vec3 {
        self.attitude().conjugate().rotate(&self.acceleration)
    }

    pub fn velocity_in_target(&self) -> Vec3 {
        self.attitude().conjugate().rotate(&self.velocity)
    }

    /// Exact frame motion, including angular acceleration.
    pub fn frame_motion(&self, g: f64) -> FrameMotion {
        let imu = imu_from_state(self, 0.0, g);
        FrameMotion { a_meas: imu.a_meas, omega: imu.omega_meas, beta: self.beta() }
    }
}

// 8-point Gauss-Legendre on [-1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];
const S_SHAPE_PANELS: usize = 64;

fn gauss_legendre(f: impl Fn(f64) -> Vec3, a: f64, b: f64) -> Vec3 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    GL_NODES.iter().zip(GL_WEIGHTS.iter()).map(|(x, w)| f(mid + half * x) * *w).sum::<Vec3>() * half
}

fn s_shape_heading(amplitude: f64, period: f64, t: f64) -> f64 {
    let k = std::f64::consts::TAU / period;
    amplitude / k * (k * t).sin()
}

/// Displacement from 0 to `t` (t within one period), heading 0 at start.
fn s_shape_displacement(amplitude: f64, period: f64, speed: f64, t: f64) -> Vec3 {
    let integrand = |s: f64| {
        let psi = s_shape_heading(amplitude, period, s);
        Vec3::new(speed * psi.cos(), speed * psi.sin(), 0.0)
    };
    let width = period / S_SHAPE_PANELS as f64;
    let full = (t / width).floor() as usize;
    let mut sum = Vec3::zeros();
    for i in 0..full.min(S_SHAPE_PANELS) {
        sum += gauss_legendre(integrand, i as f64 * width, (i + 1) as f64 * width);
    }
    let start = full as f64 * width;
    if t > start {
        sum += gauss_legendre(integrand, start, t);
    }
    sum
}

impl TargetMotion {
    pub fn new(kind: MotionKind, origin: Vec3, heading: f64) -> Self {
        let period_shift = match kind {
            MotionKind::SShape { amplitude, period, speed } => s_shape_displacement(amplitude, period, speed, period),
            _ => Vec3::zeros(),
        };
        Self { kind, origin, heading, period_shift }
    }

    pub fn stationary() -> Self {
        Self::new(MotionKind::Static, Vec3::zeros(), 0.0)
    }

    pub fn circular(speed: f64, yaw_rate: f64) -> Self {
        Self::new(MotionKind::Circular { speed, yaw_rate }, Vec3::zeros(), 0.0)
    }

    /// Radius of the circular path, when defined.
    pub fn radius(&self) -> Option<f64> {
        match self.kind {
            MotionKind::Circular { speed, yaw_rate } if yaw_rate != 0.0 => Some(speed / yaw_rate),
            _ => None,
        }
    }

    /// Analytic kinematics at time `t >= 0`.
    pub fn state(&self, t: f64) -> TargetState {
        let rot = Quat::from_yaw(self.heading);
        match &self.kind {
            MotionKind::Static => TargetState {
                position: self.origin,
                velocity: Vec3::zeros(),
                acceleration: Vec3::zeros(),
                yaw: self.heading,
                yaw_rate: 0.0,
                yaw_accel: 0.0,
            },
            &MotionKind::Circular { speed, yaw_rate } => {
                let psi = self.heading + yaw_rate * t;
                let (s, c) = psi.sin_cos();
                let local = if yaw_rate.abs() > 1e-12 {
                    let (s0, c0) = self.heading.sin_cos();
                    let r = speed / yaw_rate;
                    Vec3::new(r * (s - s0), -r * (c - c0), 0.0)
                } else {
                    let (s0, c0) = self.heading.sin_cos();
                    Vec3::new(speed * t * c0, speed * t * s0, 0.0)
                };
                TargetState {
                    position: self.origin + local,
                    velocity: Vec3::new(speed * c, speed * s, 0.0),
                    acceleration: Vec3::new(-speed * yaw_rate * s, speed * yaw_rate * c, 0.0),
                    yaw: psi,
                    yaw_rate,
                    yaw_accel: 0.0,
                }
            }
            &MotionKind::SShape { amplitude, period, speed } => {
                let k = std::f64::consts::TAU / period;
                let cycles = (t / period).floor();
                let rem = t - cycles * period;
                let local = self.period_shift * cycles + s_shape_displacement(amplitude, period, speed, rem);
                let psi = self.heading + s_shape_heading(amplitude, period, t);
                let yaw_rate = amplitude * (k * t).cos();
                let (s, c) = psi.sin_cos();
                TargetState {
                    position: self.origin + rot.rotate(&local),
                    velocity: Vec3::new(speed * c, speed * s, 0.0),
                    acceleration: Vec3::new(-speed * yaw_rate * s, speed * yaw_rate * c, 0.0),
                    yaw: psi,
                    yaw_rate,
                    yaw_accel: -amplitude * k * (k * t).sin(),
                }
            }
            MotionKind::Spline(traj) => {
                let (p, v, a, j) = traj.evaluate(t);
                let d = v.x * v.x + v.y * v.y;
                let (yaw, yaw_rate, yaw_accel) = if d > 1e-12 {
                    let n = v.x * a.y - v.y * a.x;
                    let n_dot = v.x * j.y - v.y * j.x;
                    let d_dot = 2.0 * (v.x * a.x + v.y * a.y);
                    (self.heading + v.y.atan2(v.x), n / d, (n_dot * d - n * d_dot) / (d * d))
                } else {
                    (self.heading, 0.0, 0.0)
                };
                TargetState {
                    position: self.origin + rot.rotate(&p),
                    velocity: rot.rotate(&v),
                    acceleration: rot.rotate(&a),
                    yaw,
                    yaw_rate,
                    yaw_accel,
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Specific force in N, m/s^2.
    pub a_meas: Vec3,
    /// Angular velocity in N, rad/s.
    pub omega_meas: Vec3,
}

/// Per-channel Gaussian noise standard deviations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// m
    pub position: f64,
    /// m/s
    pub velocity: f64,
    /// rad, rotation angle about a uniformly random axis
    pub rotation: f64,
    /// m/s^2
    pub accel: f64,
    /// rad/s
    pub rate: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::standard()
    }
}

impl NoiseModel {
    /// Sensor noise levels used for the simulated experiments.
    pub fn standard() -> Self {
        Self { position: 0.025, velocity: 0.025, rotation: 0.044, accel: 0.025, rate: 0.044 }
    }

    pub fn none() -> Self {
        Self { position: 0.0, velocity: 0.0, rotation: 0.0, accel: 0.0, rate: 0.0 }
    }

    pub fn is_valid(&self) -> bool {
        [self.position, self.velocity, self.rotation, self.accel, self.rate].iter().all(|s| s.is_finite() && *s >= 0.0)
    }
}

fn gaussian3(rng: &mut impl Rng, sigma: f64) -> Vec3 {
    let mut draw = || -> f64 { StandardNormal.sample(rng) };
    Vec3::new(draw(), draw(), draw()) * sigma
}

/// Clean IMU output of the target at the given kinematic state.
pub fn imu_from_state(state: &TargetState, t: f64, g: f64) -> ImuSample {
    let specific_world = state.acceleration + Vec3::new(0.0, 0.0, g);
    ImuSample { t, a_meas: state.attitude().conjugate().rotate(&specific_world), omega_meas: state.omega() }
}

pub fn synth_imu<R: Rng>(motion: &TargetMotion, t: f64, g: f64, noise: Option<(&NoiseModel, &mut R)>) -> ImuSample {
    let mut sample = imu_from_state(&motion.state(t), t, g);
    if let Some((model, rng)) = noise {
        sample.a_meas += gaussian3(rng, model.accel);
        sample.omega_meas += gaussian3(rng, model.rate);
    }
    sample
}

/// Uniform moving average over the last `window` samples. Until the window
/// fills, the average is over the samples seen so far.
#[derive(Clone, Debug)]
pub struct MovingAverage {
    window: usize,
    buffer: VecDeque<ImuSample>,
}

impl MovingAverage {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1, "moving average window must be at least 1");
        Self { window, buffer: VecDeque::with_capacity(window) }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn push(&mut self, sample: ImuSample) -> ImuSample {
        if self.buffer.len() == self.window {
            self.buffer.pop_front();
        }
        self.buffer.push_back(sample);
        let n = self.buffer.len() as f64;
        let (a, w) =
            self.buffer.iter().fold((Vec3::zeros(), Vec3::zeros()), |(a, w), s| (a + s.a_meas, w + s.omega_meas));
        ImuSample { t: sample.t, a_meas: a / n, omega_meas: w / n }
    }
}

/// Filters a whole stream.
pub fn moving_average(samples: &[ImuSample], window: usize) -> Vec<ImuSample> {
    let mut filter = MovingAverage::new(window);
    samples.iter().map(|s| filter.push(*s)).collect()
}

/// Relative state of the agent as measured in the target frame.
///
/// Angular acceleration is reported as zero; it is not observable from the
/// target's IMU.
pub fn observe_relative<R: Rng>(
    agent: &WorldState,
    target: &TargetState,
    g: f64,
    noise: Option<(&NoiseModel, &mut R)>,
) -> RelativeState {
    let q_nw = target.attitude().conjugate();
    let omega = target.omega();
    let p = q_nw.rotate(&(agent.position - target.position));
    let v = -omega.cross(&p) + q_nw.rotate(&(agent.velocity - target.velocity));
    let q = (q_nw * agent.attitude).normalize();
    let imu = imu_from_state(target, 0.0, g);
    let mut rel = RelativeState { p, v, q, a_meas: imu.a_meas, omega_meas: imu.omega_meas, beta: Vec3::zeros() };
    if let Some((model, rng)) = noise {
        rel.p += gaussian3(rng, model.position);
        rel.v += gaussian3(rng, model.velocity);
        let axis = gaussian3(rng, 1.0);
        let angle: f64 = StandardNormal.sample(rng);
        let axis = if axis.norm() > 0.0 { axis } else { Vec3::x() };
        rel.q = (rel.q * Quat::from_axis_angle(&axis, angle * model.rotation)).normalize();
        rel.a_meas += gaussian3(rng, model.accel);
        rel.omega_meas += gaussian3(rng, model.rate);
    }
    rel
}

/// World state of an agent whose relative pose/velocity is `rel` while the
/// target is in `target`.
pub fn world_from_relative(rel: &RelativeState, target: &TargetState) -> WorldState {
    let q_wn = target.attitude();
    let omega = target.omega();
    WorldState {
        position: target.position + q_wn.rotate(&rel.p),
        velocity: target.velocity + q_wn.rotate(&(rel.v + omega.cross(&rel.p))),
        attitude: (q_wn * rel.q).normalize(),
    }
}
