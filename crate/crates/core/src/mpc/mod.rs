//! Receding-horizon controller on the relative model.
//!
//! Each solve runs Gauss-Newton SQP on the multiple-shooting transcription
//!
//! ```text
//! min  sum_k |x_k - r_k|^2_Q + |u_k - u_h|^2_R  +  |x_N - r_N|^2_Qf
//! s.t. x_0 = estimate,  x_{k+1} = f_d(x_k, u_k),  u_min <= u_k <= u_max
//! ```
//!
//! The measurement part of the state is independent of pose and input and has
//! zero weight, so nodes carry it forward exactly and only the 10-dimensional
//! pose block is linearized. Dynamics are condensed into a dense QP over the
//! `4N` inputs, solved by [`qp::solve_box_qp`].

pub mod qp;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SMatrix};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    idx, rk4_step_vector, step_with_pose_sensitivities, ControlInput, InputVector, RelVector, RelativeState,
    StateVector, GRAVITY, INPUT_DIM, REL_DIM, STATE_DIM,
};
use crate::error::{Error, Result};
use crate::geom::Quat;
use crate::reference::ReferenceWindow;

type PoseMatrix = SMatrix<f64, REL_DIM, REL_DIM>;
type PoseInputMatrix = SMatrix<f64, REL_DIM, INPUT_DIM>;

fn default_q() -> [f64; STATE_DIM] {
    let mut q = [0.0; STATE_DIM];
    q[0..3].fill(100.0);
    q[3..6].fill(10.0);
    q[6..10].fill(50.0);
    q
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    /// Prediction horizon, s.
    pub horizon: f64,
    /// Shooting interval, s.
    pub dt: f64,
    /// State weights in state order; the nine measurement entries must be 0.
    pub q: [f64; STATE_DIM],
    /// Input weights (thrust, wx, wy, wz).
    pub r: [f64; INPUT_DIM],
    /// Terminal state weights.
    pub q_final: [f64; STATE_DIM],
    /// Collective thrust bounds, m/s^2.
    pub thrust_min: f64,
    pub thrust_max: f64,
    /// Roll/pitch rate bound, rad/s.
    pub rate_rp: f64,
    /// Yaw rate bound, rad/s.
    pub rate_yaw: f64,
    pub max_sqp_iters: usize,
    pub kkt_tol: f64,
    pub gravity: f64,
}

// 3.14 rad/s is the rate limit itself, not an approximation of pi
#[allow(clippy::approx_constant)]
impl Default for MpcConfig {
    fn default() -> Self {
        let q = default_q();
        Self {
            horizon: 2.0,
            dt: 0.1,
            q,
            r: [1.0, 5.0, 5.0, 5.0],
            q_final: q.map(|w| 10.0 * w),
            thrust_min: 2.0,
            thrust_max: 20.0,
            rate_rp: 3.14,
            rate_yaw: 3.14,
            max_sqp_iters: 3,
            kkt_tol: 1e-6,
            gravity: GRAVITY,
        }
    }
}

impl MpcConfig {
    /// Number of shooting intervals.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn hover_input(&self) -> InputVector {
        InputVector::new(self.gravity, 0.0, 0.0, 0.0)
    }

    pub fn input_bounds(&self) -> (InputVector, InputVector) {
        (
            InputVector::new(self.thrust_min, -self.rate_rp, -self.rate_rp, -self.rate_yaw),
            InputVector::new(self.thrust_max, self.rate_rp, self.rate_rp, self.rate_yaw),
        )
    }

    pub fn clamp_input(&self, u: &InputVector) -> InputVector {
        let (lo, hi) = self.input_bounds();
        u.zip_zip_map(&lo, &hi, |v, l, h| v.clamp(l, h))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("mpc.{key}"), format!("must be positive, got {v}")))
            }
        };
        positive("horizon", self.horizon)?;
        positive("dt", self.dt)?;
        positive("rate_rp", self.rate_rp)?;
        positive("rate_yaw", self.rate_yaw)?;
        positive("kkt_tol", self.kkt_tol)?;
        positive("gravity", self.gravity)?;
        let n = self.horizon / self.dt;
        if n.round() < 1.0 || (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::config("mpc.horizon", "must be a positive multiple of dt"));
        }
        if !(self.thrust_min.is_finite() && self.thrust_max.is_finite() && self.thrust_min < self.thrust_max) {
            return Err(Error::config("mpc.thrust_min", "must be below thrust_max"));
        }
        for (key, w) in [("q", &self.q), ("q_final", &self.q_final)] {
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::config(format!("mpc.{key}"), "weights must be nonnegative"));
            }
            if w[idx::A_MEAS..].iter().any(|v| *v != 0.0) {
                return Err(Error::config(
                    format!("mpc.{key}"),
                    "weights on the target measurement entries (10..19) must be zero",
                ));
            }
        }
        if self.r.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::config("mpc.r", "input weights must be positive"));
        }
        Ok(())
    }
}

/// Weighted squared residual `|x - x_ref|^2_Q + |u - u_h|^2_R`, with the
/// reference quaternion sign-aligned to the state's.
pub fn stage_cost(
    x: &StateVector,
    x_ref: &StateVector,
    u: &InputVector,
    q: &[f64; STATE_DIM],
    r: &[f64; INPUT_DIM],
    u_hover: &InputVector,
) -> f64 {
    let e = pose_residual(x, x_ref);
    let du = u - u_hover;
    (0..REL_DIM).map(|i| q[i] * e[i] * e[i]).sum::<f64>() + (0..INPUT_DIM).map(|i| r[i] * du[i] * du[i]).sum::<f64>()
}

fn quat_of(x: &StateVector) -> Quat {
    Quat::from_vector4(&x.fixed_rows::<4>(idx::Q).into())
}

fn pose(x: &StateVector) -> RelVector {
    x.fixed_rows::<REL_DIM>(0).into()
}

fn pose_residual(x: &StateVector, x_ref: &StateVector) -> RelVector {
    let mut e = pose(x) - pose(x_ref);
    let q_ref = quat_of(x_ref).aligned_to(&quat_of(x));
    e.fixed_rows_mut::<4>(idx::Q).copy_from(&(quat_of(x).to_vector4() - q_ref.to_vector4()));
    e
}

#[derive(Clone, Debug)]
pub struct MpcSolution {
    pub u0: ControlInput,
    /// Shooting nodes `x_0..x_N`.
    pub states: Vec<StateVector>,
    /// Inputs `u_0..u_{N-1}`, inside the box.
    pub inputs: Vec<InputVector>,
    /// Max of the projected-gradient norm and the largest dynamics defect,
    /// evaluated at the returned iterate.
    pub kkt_residual: f64,
    /// QP subproblems solved.
    pub iterations: usize,
    pub converged: bool,
    pub solve_time: Duration,
}

struct Linearization {
    a: Vec<PoseMatrix>,
    b: Vec<PoseInputMatrix>,
    defects: Vec<RelVector>,
    residuals: Vec<RelVector>,
}

fn is_finite<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Forward pass: propagates measurement states, evaluates defects, Jacobians
/// and cost residuals at the current iterate.
fn linearize(
    states: &mut [StateVector],
    inputs: &[InputVector],
    window: &ReferenceWindow,
    dt: f64,
) -> Result<Linearization> {
    let n = inputs.len();
    let mut lin = Linearization {
        a: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        defects: Vec::with_capacity(n),
        residuals: Vec::with_capacity(n + 1),
    };
    for k in 0..n {
        let step = step_with_pose_sensitivities(&states[k], &inputs[k], dt);
        if !(is_finite(&step.next) && is_finite(&step.a) && is_finite(&step.b)) {
            return Err(Error::NonFinite);
        }
        let meas = step.next.fixed_rows::<{ STATE_DIM - REL_DIM }>(REL_DIM).into_owned();
        states[k + 1].fixed_rows_mut::<{ STATE_DIM - REL_DIM }>(REL_DIM).copy_from(&meas);
        lin.defects.push(pose(&step.next) - pose(&states[k + 1]));
        lin.a.push(step.a);
        lin.b.push(step.b);
    }
    for (x, r) in states.iter().zip(&window.states) {
        lin.residuals.push(pose_residual(x, &r.to_vector()));
    }
    Ok(lin)
}

struct Weights {
    q: PoseMatrix,
    q_final: PoseMatrix,
    r: SMatrix<f64, INPUT_DIM, INPUT_DIM>,
}

impl Weights {
    fn new(cfg: &MpcConfig) -> Self {
        let diag = |w: &[f64]| PoseMatrix::from_diagonal(&RelVector::from_column_slice(&w[..REL_DIM]));
        Self {
            q: diag(&cfg.q),
            q_final: diag(&cfg.q_final),
            r: SMatrix::from_diagonal(&InputVector::from_column_slice(&cfg.r)),
        }
    }
}

/// Gradient of the condensed cost (halved) with respect to the inputs,
/// by the adjoint recursion.
fn condensed_gradient(lin: &Linearization, inputs: &[InputVector], w: &Weights, u_hover: &InputVector) -> DVector<f64> {
    let n = inputs.len();
    // state offsets induced by the defects alone
    let mut c = vec![RelVector::zeros(); n + 1];
    for k in 0..n {
        c[k + 1] = lin.a[k] * c[k] + lin.defects[k];
    }
    let mut g = DVector::zeros(INPUT_DIM * n);
    let mut lambda = w.q_final * (lin.residuals[n] + c[n]);
    for k in (0..n).rev() {
        let gk = lin.b[k].transpose() * lambda + w.r * (inputs[k] - u_hover);
        g.fixed_rows_mut::<INPUT_DIM>(INPUT_DIM * k).copy_from(&gk);
        if k > 0 {
            lambda = w.q * (lin.residuals[k] + c[k]) + lin.a[k].transpose() * lambda;
        }
    }
    g
}

/// Gauss-Newton Hessian of the condensed cost (halved).
fn condensed_hessian(lin: &Linearization, w: &Weights) -> DMatrix<f64> {
    let n = lin.a.len();
    let mut p = vec![PoseMatrix::zeros(); n + 1];
    p[n] = w.q_final;
    for k in (1..n).rev() {
        p[k] = w.q + lin.a[k].transpose() * p[k + 1] * lin.a[k];
    }
    let mut h = DMatrix::zeros(INPUT_DIM * n, INPUT_DIM * n);
    for j in 0..n {
        let mut m: PoseInputMatrix = p[j + 1] * lin.b[j];
        let diag = lin.b[j].transpose() * m + w.r;
        h.fixed_view_mut::<INPUT_DIM, INPUT_DIM>(INPUT_DIM * j, INPUT_DIM * j).copy_from(&diag);
        for i in (0..j).rev() {
            m = lin.a[i + 1].transpose() * m;
            let block = lin.b[i].transpose() * m;
            h.fixed_view_mut::<INPUT_DIM, INPUT_DIM>(INPUT_DIM * i, INPUT_DIM * j).copy_from(&block);
            h.fixed_view_mut::<INPUT_DIM, INPUT_DIM>(INPUT_DIM * j, INPUT_DIM * i).copy_from(&block.transpose());
        }
    }
    h
}

fn stack(inputs: &[InputVector]) -> DVector<f64> {
    DVector::from_iterator(INPUT_DIM * inputs.len(), inputs.iter().flat_map(|u| u.iter().copied()))
}

/// Initial iterate: warm start when its horizon matches, else a hover rollout.
fn initial_guess(
    x0: &StateVector,
    cfg: &MpcConfig,
    warm: Option<&MpcSolution>,
) -> (Vec<StateVector>, Vec<InputVector>) {
    let n = cfg.steps();
    if let Some(w) = warm.filter(|w| w.inputs.len() == n && w.states.len() == n + 1) {
        let mut states = w.states.clone();
        states[0] = *x0;
        let inputs = w.inputs.iter().map(|u| cfg.clamp_input(u)).collect();
        return (states, inputs);
    }
    let u = cfg.clamp_input(&cfg.hover_input());
    let mut states = Vec::with_capacity(n + 1);
    states.push(*x0);
    for k in 0..n {
        states.push(rk4_step_vector(&states[k], &u, cfg.dt));
    }
    (states, vec![u; n])
}

/// Runs SQP from `x0` against `window`.
///
/// Returns [`Error::NonFinite`] if the linearization blows up; hitting the
/// iteration cap is not an error and is reported through `converged`.
pub fn solve(
    x0: &RelativeState,
    window: &ReferenceWindow,
    cfg: &MpcConfig,
    warm: Option<&MpcSolution>,
) -> Result<MpcSolution> {
    let start = Instant::now();
    let n = cfg.steps();
    assert_eq!(window.horizon(), n, "reference window must have N + 1 states");
    let x0 = x0.to_vector();
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (mut states, mut inputs) = initial_guess(&x0, cfg, warm);
    let w = Weights::new(cfg);
    let u_hover = cfg.hover_input();
    let (lo, hi) = cfg.input_bounds();
    let lower = stack(&vec![lo; n]);
    let upper = stack(&vec![hi; n]);

    let mut iterations = 0;
    let (kkt_residual, converged) = loop {
        let lin = linearize(&mut states, &inputs, window, cfg.dt)?;
        let g = condensed_gradient(&lin, &inputs, &w, &u_hover);
        let u = stack(&inputs);
        let max_defect = lin.defects.iter().map(|d| d.amax()).fold(0.0, f64::max);
        let kkt = qp::projected_gradient_norm(&u, &g, &lower, &upper).max(max_defect);
        if !kkt.is_finite() {
            return Err(Error::NonFinite);
        }
        if kkt < cfg.kkt_tol {
            break (kkt, true);
        }
        if iterations == cfg.max_sqp_iters {
            break (kkt, false);
        }

        let h = condensed_hessian(&lin, &w);
        let step = qp::solve_box_qp(&h, &g, &(&lower - &u), &(&upper - &u), &DVector::zeros(u.len()));
        if !step.x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }

        let mut ds = RelVector::zeros();
        for k in 0..n {
            let new_u = cfg.clamp_input(&(inputs[k] + step.x.fixed_rows::<INPUT_DIM>(INPUT_DIM * k)));
            ds = lin.a[k] * ds + lin.b[k] * (new_u - inputs[k]) + lin.defects[k];
            inputs[k] = new_u;
            let node = &mut states[k + 1];
            let updated = pose(node) + ds;
            node.fixed_rows_mut::<REL_DIM>(0).copy_from(&updated);
            let qn = node.fixed_rows::<4>(idx::Q).norm();
            node.fixed_rows_mut::<4>(idx::Q).unscale_mut(qn);
        }
        iterations += 1;
    };

    Ok(MpcSolution {
        u0: ControlInput::from_vector(&inputs[0]),
        states,
        inputs,
        kkt_residual,
        iterations,
        converged,
        solve_time: start.elapsed(),
    })
}

/// What the controller did on one control tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlOutcome {
    pub input: ControlInput,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    /// The solver failed and the clamped hover input was issued instead.
    pub fallback: bool,
    pub solve_time: Duration,
}

/// Stateful controller: keeps the last solution as a warm start and shifts it
/// as time advances past whole shooting intervals.
#[derive(Clone, Debug)]
pub struct ConiMpc {
    cfg: MpcConfig,
    warm: Option<MpcSolution>,
    /// Shooting interval index that `warm`'s first node corresponds to.
    anchor: i64,
}

impl ConiMpc {
    pub fn new(cfg: MpcConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, warm: None, anchor: 0 })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn last_solution(&self) -> Option<&MpcSolution> {
        self.warm.as_ref()
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    fn interval_index(&self, t: f64) -> i64 {
        (t / self.cfg.dt + 1e-6).floor() as i64
    }

    fn shift_warm_start(&mut self, index: i64) {
        let shift = index - self.anchor;
        self.anchor = index;
        let Some(sol) = self.warm.as_mut() else { return };
        if shift <= 0 {
            return;
        }
        let n = sol.inputs.len();
        let s = (shift as usize).min(n);
        let last_u = *sol.inputs.last().expect("horizon is at least one step");
        sol.inputs.drain(..s);
        sol.inputs.resize(n, last_u);
        sol.states.drain(..s);
        while sol.states.len() < n + 1 {
            let next = rk4_step_vector(sol.states.last().expect("non-empty"), &last_u, self.cfg.dt);
            sol.states.push(next);
        }
    }

    /// Solves from the latest estimate at time `t` and returns the first input.
    pub fn control_loop_step(&mut self, t: f64, estimate: &RelativeState, window: &ReferenceWindow) -> ControlOutcome {
        let index = self.interval_index(t);
        self.shift_warm_start(index);
        match solve(estimate, window, &self.cfg, self.warm.as_ref()) {
            Ok(sol) => {
                let outcome = ControlOutcome {
                    input: sol.u0,
                    iterations: sol.iterations,
                    kkt_residual: sol.kkt_residual,
                    converged: sol.converged,
                    fallback: false,
                    solve_time: sol.solve_time,
                };
                self.warm = Some(sol);
                outcome
            }
            Err(e) => {
                log::warn!("solver failed at t={t:.3}: {e}; issuing hover");
                self.warm = None;
                ControlOutcome {
                    input: ControlInput::from_vector(&self.cfg.clamp_input(&self.cfg.hover_input())),
                    iterations: 0,
                    kkt_residual: f64::NAN,
                    converged: false,
                    fallback: true,
                    solve_time: Duration::ZERO,
                }
            }
        }
    }
}
