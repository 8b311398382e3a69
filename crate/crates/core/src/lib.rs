//! Model-predictive control of a quadrotor in the body frame of a moving,
//! rotating target, using only relative measurements and the target's IMU.
//!
//! Modules, bottom up:
//!
//! - [`geom`]: quaternions and rotations
//! - [`dynamics`]: the relative model, its RK4 discretization and Jacobians
//! - [`world`]: world-frame quadrotor plant
//! - [`target`]: target motion, IMU synthesis, relative observation
//! - [`reference`]: fixed-point and minimum-jerk reference windows
//! - [`mpc`]: the SQP controller
//! - [`harness`]: closed-loop runs and parameter sweeps
//! - [`config`], [`report`], [`verify`]: file formats and self-checks

pub mod config;
pub mod dynamics;
pub mod error;
pub mod geom;
pub mod harness;
pub mod mpc;
pub mod reference;
pub mod report;
pub mod target;
pub mod verify;
pub mod world;

pub use error::{Error, Result};
