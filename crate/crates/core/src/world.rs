//! World-frame quadrotor plant.
//!
//! Point-mass translational dynamics with perfect body-rate tracking. Used as
//! the closed-loop plant and as an independent check on the relative model.

use crate::dynamics::ControlInput;
use crate::geom::{Quat, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Body to world.
    pub attitude: Quat,
}

impl Default for WorldState {
    fn default() -> Self {
        Self { position: Vec3::zeros(), velocity: Vec3::zeros(), attitude: Quat::IDENTITY }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldDerivative {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: Quat,
}

pub fn world_rhs(x: &WorldState, u: &ControlInput, g: f64) -> WorldDerivative {
    let q = x.attitude;
    let thrust = (q * Quat::pure(&Vec3::new(0.0, 0.0, u.thrust)) * q.conjugate()).vector();
    WorldDerivative {
        position: x.velocity,
        velocity: thrust - Vec3::new(0.0, 0.0, g),
        attitude: (x.attitude * Quat::pure(&u.omega_b)).scale(0.5),
    }
}

fn advance(x: &WorldState, d: &WorldDerivative, h: f64) -> WorldState {
    WorldState {
        position: x.position + d.position * h,
        velocity: x.velocity + d.velocity * h,
        attitude: x.attitude.add(&d.attitude.scale(h)),
    }
}

pub fn world_rk4(x: &WorldState, u: &ControlInput, dt: f64, g: f64) -> WorldState {
    let k1 = world_rhs(x, u, g);
    let k2 = world_rhs(&advance(x, &k1, 0.5 * dt), u, g);
    let k3 = world_rhs(&advance(x, &k2, 0.5 * dt), u, g);
    let k4 = world_rhs(&advance(x, &k3, dt), u, g);
    let h6 = dt / 6.0;
    WorldState {
        position: x.position + (k1.position + (k2.position + k3.position) * 2.0 + k4.position) * h6,
        velocity: x.velocity + (k1.velocity + (k2.velocity + k3.velocity) * 2.0 + k4.velocity) * h6,
        attitude: x
            .attitude
            .add(&k1.attitude.add(&k2.attitude.add(&k3.attitude).scale(2.0)).add(&k4.attitude).scale(h6))
            .normalize(),
    }
}
