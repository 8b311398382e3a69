//! Closed-loop experiments and parameter sweeps.
//!
//! A run flies the world-frame plant under the controller while the target
//! follows its programmed motion. The controller only sees the noisy relative
//! observation and the filtered target IMU. The tracking error at each control
//! tick is the distance between the estimated relative position and the first
//! point of the current reference window.

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, RelativeState};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mpc::{ConiMpc, MpcConfig};
use crate::reference::{
    fixed_point_window, min_jerk, sample_window, scale_to_limits, AttitudeRule, BoundaryConditions, MinJerkTrajectory,
    ReferenceWindow,
};
use crate::target::{
    imu_from_state, observe_relative, synth_imu, world_from_relative, MotionKind, MovingAverage, NoiseModel,
    TargetMotion,
};
use crate::world::world_rk4;

/// Mean tracking error above which a run counts as a failure, m.
pub const FAILURE_THRESHOLD: f64 = 0.30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Hold a constant relative point `(-r, 0, z)`.
    FixedPoint,
    /// Land from `(-r, 0, z)` onto the target-frame origin along a
    /// minimum-jerk plan.
    FixedPlan,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::FixedPoint => "fixed_point",
            Scheme::FixedPlan => "fixed_plan",
        }
    }
}

/// Landing plan limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConfig {
    /// Relative speed limit, m/s.
    pub v_max: f64,
    /// Relative acceleration limit, m/s^2.
    pub a_max: f64,
    /// Segment duration before time scaling, s.
    pub initial_duration: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self { v_max: 1.0, a_max: 2.0, initial_duration: 1.0 }
    }
}

/// Target motion family; speed and yaw rate come from the experiment's `v`
/// and `omega`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetShape {
    #[default]
    Circular,
    Static,
    /// Yaw rate `omega * cos(2 pi t / period)` at forward speed `v`.
    SShape {
        period: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    /// Planar range to the reference start point, m.
    #[serde(default = "defaults::r")]
    pub r: f64,
    /// Target forward speed, m/s.
    #[serde(default = "defaults::v")]
    pub v: f64,
    /// Target yaw rate, rad/s.
    #[serde(default = "defaults::omega")]
    pub omega: f64,
    /// Reference height above the target, m.
    #[serde(default = "defaults::z")]
    pub z: f64,
    /// Run length for the fixed-point scheme, s. Fixed-plan runs end when the
    /// plan does.
    #[serde(default = "defaults::duration")]
    pub duration: f64,
    /// Initial interval excluded from the error statistics, s. In the
    /// fixed-plan scheme the start point is held for this long.
    #[serde(default = "defaults::settle")]
    pub settle: f64,
    #[serde(default)]
    pub seed: u64,
    /// Controller rate, Hz.
    #[serde(default = "defaults::control_rate")]
    pub control_rate: f64,
    /// Reference window update rate, Hz.
    #[serde(default = "defaults::reference_rate")]
    pub reference_rate: f64,
    /// Moving-average window on the target IMU, samples.
    #[serde(default = "defaults::imu_window")]
    pub imu_window: usize,
    /// Added to the start point for the initial relative position, m.
    #[serde(default)]
    pub initial_offset: [f64; 3],
    /// Record wall-clock solve times. Off by default so that outputs are
    /// reproducible byte for byte.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub target: TargetShape,
}

mod defaults {
    pub fn r() -> f64 {
        1.0
    }
    pub fn v() -> f64 {
        1.0
    }
    pub fn omega() -> f64 {
        0.31
    }
    pub fn z() -> f64 {
        2.0
    }
    pub fn duration() -> f64 {
        60.0
    }
    pub fn settle() -> f64 {
        5.0
    }
    pub fn control_rate() -> f64 {
        100.0
    }
    pub fn reference_rate() -> f64 {
        10.0
    }
    pub fn imu_window() -> usize {
        5
    }
}

impl ExperimentConfig {
    pub fn new(scheme: Scheme, r: f64, v: f64, omega: f64) -> Self {
        Self {
            scheme,
            r,
            v,
            omega,
            z: defaults::z(),
            duration: defaults::duration(),
            settle: defaults::settle(),
            seed: 0,
            control_rate: defaults::control_rate(),
            reference_rate: defaults::reference_rate(),
            imu_window: defaults::imu_window(),
            initial_offset: [0.0; 3],
            timing: false,
            noise: NoiseModel::standard(),
            mpc: MpcConfig::default(),
            plan: PlanConfig::default(),
            target: TargetShape::Circular,
        }
    }

    pub fn with_cell(&self, r: f64, v: f64, omega: f64) -> Self {
        Self { r, v, omega, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(key, reason))
            }
        };
        check(self.r.is_finite() && self.r >= 0.0, "r", "must be nonnegative")?;
        check(self.v.is_finite(), "v", "must be finite")?;
        check(self.omega.is_finite(), "omega", "must be finite")?;
        check(self.z.is_finite(), "z", "must be finite")?;
        check(self.duration.is_finite() && self.duration > 0.0, "duration", "must be positive")?;
        check(self.settle.is_finite() && self.settle >= 0.0, "settle", "must be nonnegative")?;
        check(self.control_rate.is_finite() && self.control_rate > 0.0, "control_rate", "must be positive")?;
        check(self.reference_rate.is_finite() && self.reference_rate > 0.0, "reference_rate", "must be positive")?;
        let ratio = self.control_rate / self.reference_rate;
        check(
            ratio >= 1.0 && (ratio - ratio.round()).abs() < 1e-9,
            "reference_rate",
            "control_rate must be an integer multiple of reference_rate",
        )?;
        check(self.imu_window >= 1, "imu_window", "must be at least 1")?;
        check(self.initial_offset.iter().all(|v| v.is_finite()), "initial_offset", "must be finite")?;
        check(self.noise.is_valid(), "noise", "standard deviations must be finite and nonnegative")?;
        check(self.plan.v_max.is_finite() && self.plan.v_max > 0.0, "plan.v_max", "must be positive")?;
        check(self.plan.a_max.is_finite() && self.plan.a_max > 0.0, "plan.a_max", "must be positive")?;
        check(
            self.plan.initial_duration.is_finite() && self.plan.initial_duration > 0.0,
            "plan.initial_duration",
            "must be positive",
        )?;
        if let TargetShape::SShape { period } = self.target {
            check(period.is_finite() && period > 0.0, "target.period", "must be positive")?;
        }
        self.mpc.validate()
    }

    pub fn start_point(&self) -> Vec3 {
        Vec3::new(-self.r, 0.0, self.z)
    }

    pub fn target_motion(&self) -> TargetMotion {
        let kind = match self.target {
            TargetShape::Circular => MotionKind::Circular { speed: self.v, yaw_rate: self.omega },
            TargetShape::Static => MotionKind::Static,
            TargetShape::SShape { period } => MotionKind::SShape { amplitude: self.omega, period, speed: self.v },
        };
        TargetMotion::new(kind, Vec3::zeros(), 0.0)
    }

    /// Time-scaled landing plan from the start point to the origin.
    pub fn landing_plan(&self) -> Result<MinJerkTrajectory> {
        let bc = BoundaryConditions::rest_to_rest(self.start_point(), Vec3::zeros());
        let raw = min_jerk(bc, &[], &[self.plan.initial_duration])?;
        Ok(scale_to_limits(&raw, self.plan.v_max, self.plan.a_max))
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one grid cell, independent of evaluation order.
pub fn cell_seed(seed: u64, r: f64, v: f64, omega: f64) -> u64 {
    [r, v, omega].iter().fold(mix(seed), |h, x| mix(h ^ ((x * 1e6).round() as i64 as u64)))
}

/// One control tick of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    /// Estimated relative position minus the current reference point, m.
    pub error: Vec3,
    pub input: ControlInput,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub fallback: bool,
    pub solve_time: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    /// Tracking errors over the scored interval, m.
    pub errors: Vec<f64>,
    pub mean_error: f64,
    pub max_error: f64,
    pub failed: bool,
    /// True distance from the target-frame origin at the end of the run, m.
    pub final_distance: f64,
    /// Ticks on which the solver failed and hover was issued.
    pub fallbacks: usize,
    pub max_iterations: usize,
    /// Every commanded input lay inside the box.
    pub inputs_within_bounds: bool,
    /// Mean wall-clock solve time, when timing was requested.
    pub solver_mean_ms: Option<f64>,
    /// Per-tick records; empty for summary-only runs.
    pub steps: Vec<StepRecord>,
}

impl RunResult {
    /// Mean of the stored errors (zero when nothing was scored).
    pub fn recompute_mean(errors: &[f64]) -> f64 {
        if errors.is_empty() {
            0.0
        } else {
            errors.iter().sum::<f64>() / errors.len() as f64
        }
    }
}

/// Closed-loop run with full per-tick records.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    simulate(cfg, true)
}

fn simulate(cfg: &ExperimentConfig, keep_steps: bool) -> Result<RunResult> {
    cfg.validate()?;
    let g = cfg.mpc.gravity;
    let motion = cfg.target_motion();
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(cfg.seed, cfg.r, cfg.v, cfg.omega));
    let noisy = cfg.noise != NoiseModel::none();
    let mut mpc = ConiMpc::new(cfg.mpc.clone())?;
    let horizon = cfg.mpc.steps();
    let (lo, hi) = cfg.mpc.input_bounds();

    let plan = match cfg.scheme {
        Scheme::FixedPoint => None,
        Scheme::FixedPlan => Some(cfg.landing_plan()?),
    };
    let end = match &plan {
        None => cfg.duration,
        Some(p) => cfg.settle + p.duration(),
    };
    let rule = AttitudeRule::Flat { yaw: 0.0, g };
    let window_at = |t_ref: f64| -> Result<ReferenceWindow> {
        match &plan {
            None => Ok(fixed_point_window(cfg.start_point(), horizon)),
            Some(p) => sample_window(p, rule, t_ref - cfg.settle, cfg.mpc.dt, horizon),
        }
    };

    let dt = 1.0 / cfg.control_rate;
    let ticks = (end * cfg.control_rate).round() as usize;
    let per_ref = (cfg.control_rate / cfg.reference_rate).round() as usize;

    let target0 = motion.state(0.0);
    let imu0 = imu_from_state(&target0, 0.0, g);
    let initial = RelativeState {
        p: cfg.start_point() + Vec3::from(cfg.initial_offset),
        a_meas: imu0.a_meas,
        omega_meas: imu0.omega_meas,
        ..Default::default()
    };
    let mut agent = world_from_relative(&initial, &target0);
    let mut filter = MovingAverage::new(cfg.imu_window);

    let mut window = window_at(0.0)?;
    let mut errors = Vec::new();
    let mut steps = Vec::with_capacity(if keep_steps { ticks } else { 0 });
    let mut fallbacks = 0;
    let mut max_iterations = 0;
    let mut within = true;
    let mut solve_total = Duration::ZERO;

    for i in 0..ticks {
        let t = i as f64 * dt;
        let target = motion.state(t);
        let (imu, mut estimate) = if noisy {
            (
                synth_imu(&motion, t, g, Some((&cfg.noise, &mut rng))),
                observe_relative(&agent, &target, g, Some((&cfg.noise, &mut rng))),
            )
        } else {
            (synth_imu::<ChaCha8Rng>(&motion, t, g, None), observe_relative::<ChaCha8Rng>(&agent, &target, g, None))
        };
        let filtered = filter.push(imu);
        estimate.a_meas = filtered.a_meas;
        estimate.omega_meas = filtered.omega_meas;

        if i % per_ref == 0 && plan.is_some() {
            window = window_at(t)?;
        }
        let error = estimate.p - window.first().p;
        if t >= cfg.settle - 1e-9 {
            errors.push(error.norm());
        }

        let out = mpc.control_loop_step(t, &estimate, &window);
        let u = out.input.to_vector();
        within &= (0..4).all(|k| u[k] >= lo[k] && u[k] <= hi[k]);
        fallbacks += out.fallback as usize;
        max_iterations = max_iterations.max(out.iterations);
        solve_total += out.solve_time;
        if keep_steps {
            steps.push(StepRecord {
                t,
                error,
                input: out.input,
                kkt_residual: out.kkt_residual,
                iterations: out.iterations,
                fallback: out.fallback,
                solve_time: if cfg.timing { out.solve_time } else { Duration::ZERO },
            });
        }
        agent = world_rk4(&agent, &out.input, dt, g);
    }

    let final_target = motion.state(ticks as f64 * dt);
    let final_rel = observe_relative::<ChaCha8Rng>(&agent, &final_target, g, None);
    let mean_error = RunResult::recompute_mean(&errors);
    let max_error = errors.iter().copied().fold(0.0, f64::max);
    let solver_mean_ms = (cfg.timing && ticks > 0).then(|| solve_total.as_secs_f64() * 1e3 / ticks as f64);
    if !keep_steps {
        errors = Vec::new();
    }
    Ok(RunResult {
        errors,
        mean_error,
        max_error,
        failed: mean_error.is_nan() || mean_error > FAILURE_THRESHOLD,
        final_distance: final_rel.p.norm(),
        fallbacks,
        max_iterations,
        inputs_within_bounds: within,
        solver_mean_ms,
        steps,
    })
}

/// Inclusive arithmetic range `start, start + step, ..., stop`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl ParamRange {
    pub fn new(start: f64, stop: f64, step: f64) -> Self {
        Self { start, stop, step }
    }

    pub fn single(value: f64) -> Self {
        Self { start: value, stop: value, step: 1.0 }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.stop <= self.start {
            return vec![round_grid(self.start)];
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| round_grid(self.start + i as f64 * self.step)).collect()
    }

    fn validate(&self, key: &str) -> Result<()> {
        let finite = self.start.is_finite() && self.stop.is_finite() && self.step.is_finite();
        if !finite || self.step <= 0.0 || self.stop < self.start {
            return Err(Error::config(key, "needs finite start <= stop and a positive step"));
        }
        Ok(())
    }
}

/// Grid values are kept to nine decimals so that `0.1 * 3` prints as `0.3`.
fn round_grid(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub r: ParamRange,
    pub v: ParamRange,
    pub omega: ParamRange,
}

impl SweepGrid {
    /// Default grid for a scheme: 21 x 21 x 21 cells at 0.1 spacing.
    pub fn for_scheme(scheme: Scheme) -> Self {
        let r = match scheme {
            Scheme::FixedPoint => ParamRange::new(0.0, 2.0, 0.1),
            Scheme::FixedPlan => ParamRange::new(3.0, 5.0, 0.1),
        };
        Self { r, v: ParamRange::new(0.0, 2.0, 0.1), omega: ParamRange::new(0.01, 2.01, 0.1) }
    }

    pub fn validate(&self) -> Result<()> {
        self.r.validate("sweep.r")?;
        self.v.validate("sweep.v")?;
        self.omega.validate("sweep.omega")
    }

    /// Cells in ascending `(r, v, omega)` order.
    pub fn cells(&self) -> Vec<(f64, f64, f64)> {
        let (vs, ws) = (self.v.values(), self.omega.values());
        let mut cells = Vec::with_capacity(self.r.values().len() * vs.len() * ws.len());
        for r in self.r.values() {
            for &v in &vs {
                cells.extend(ws.iter().map(|&w| (r, v, w)));
            }
        }
        cells
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    /// Worker threads; `0` lets the pool pick.
    Threads(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRecord {
    pub scheme: Scheme,
    pub r: f64,
    pub v: f64,
    pub omega: f64,
    pub mean_error: f64,
    pub max_error: f64,
    pub failed: bool,
    pub solver_mean_ms: Option<f64>,
    pub fallbacks: usize,
    pub max_iterations: usize,
    pub inputs_within_bounds: bool,
    /// Set when the cell could not be run at all.
    pub error: Option<String>,
}

fn run_cell(base: &ExperimentConfig, (r, v, omega): (f64, f64, f64)) -> SweepRecord {
    let cfg = base.with_cell(r, v, omega);
    match simulate(&cfg, false) {
        Ok(res) => SweepRecord {
            scheme: cfg.scheme,
            r,
            v,
            omega,
            mean_error: res.mean_error,
            max_error: res.max_error,
            failed: res.failed,
            solver_mean_ms: res.solver_mean_ms,
            fallbacks: res.fallbacks,
            max_iterations: res.max_iterations,
            inputs_within_bounds: res.inputs_within_bounds,
            error: None,
        },
        Err(e) => {
            log::warn!("cell r={r} v={v} omega={omega} failed: {e}");
            SweepRecord {
                scheme: cfg.scheme,
                r,
                v,
                omega,
                mean_error: f64::NAN,
                max_error: f64::NAN,
                failed: true,
                solver_mean_ms: None,
                fallbacks: 0,
                max_iterations: 0,
                inputs_within_bounds: true,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Runs every grid cell; records come back in grid order regardless of how
/// they were scheduled.
pub fn sweep(base: &ExperimentConfig, grid: &SweepGrid, parallelism: Parallelism) -> Result<Vec<SweepRecord>> {
    base.validate()?;
    grid.validate()?;
    let cells = grid.cells();
    match parallelism {
        Parallelism::Sequential => Ok(cells.into_iter().map(|c| run_cell(base, c)).collect()),
        Parallelism::Threads(n) => parallel_sweep(base, cells, n),
    }
}

#[cfg(feature = "parallel")]
fn parallel_sweep(base: &ExperimentConfig, cells: Vec<(f64, f64, f64)>, threads: usize) -> Result<Vec<SweepRecord>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    Ok(pool.install(|| cells.into_par_iter().map(|c| run_cell(base, c)).collect()))
}

#[cfg(not(feature = "parallel"))]
fn parallel_sweep(base: &ExperimentConfig, cells: Vec<(f64, f64, f64)>, threads: usize) -> Result<Vec<SweepRecord>> {
    if threads != 1 {
        log::warn!("built without the `parallel` feature; running {threads}-way sweep sequentially");
    }
    Ok(cells.into_iter().map(|c| run_cell(base, c)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    R,
    V,
    Omega,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::R => "r",
            Param::V => "v",
            Param::Omega => "omega",
        }
    }

    fn of(self, rec: &SweepRecord) -> f64 {
        match self {
            Param::R => rec.r,
            Param::V => rec.v,
            Param::Omega => rec.omega,
        }
    }
}

impl std::str::FromStr for Param {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r" => Ok(Param::R),
            "v" => Ok(Param::V),
            "omega" | "w" => Ok(Param::Omega),
            other => Err(Error::config("slice", format!("unknown parameter `{other}`, expected r, v or omega"))),
        }
    }
}

/// One parameter held fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slice {
    pub param: Param,
    pub value: f64,
}

impl std::str::FromStr for Slice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (name, value) =
            s.split_once('=').ok_or_else(|| Error::config("slice", format!("expected param=value, got `{s}`")))?;
        let value = value.trim().parse().map_err(|_| Error::config("slice", format!("`{value}` is not a number")))?;
        Ok(Slice { param: name.trim().parse()?, value })
    }
}

/// Mean errors over the two free parameters of a slice.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMap {
    pub row_param: Param,
    pub col_param: Param,
    /// Grid value actually used for the fixed parameter.
    pub slice_value: f64,
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
    /// `values[i][j]` for `rows[i]`, `cols[j]`; NaN where no record exists.
    pub values: Vec<Vec<f64>>,
    pub failed: Vec<Vec<bool>>,
}

fn sorted_unique(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Extracts a 2-D error map. A slice value off the grid snaps to the nearest
/// grid value with a warning.
pub fn error_map(records: &[SweepRecord], slice: Slice) -> Result<ErrorMap> {
    let (row_param, col_param) = match slice.param {
        Param::R => (Param::V, Param::Omega),
        Param::V => (Param::R, Param::Omega),
        Param::Omega => (Param::R, Param::V),
    };
    let fixed = sorted_unique(records.iter().map(|r| slice.param.of(r)).collect());
    let nearest = fixed
        .iter()
        .copied()
        .min_by(|a, b| (a - slice.value).abs().total_cmp(&(b - slice.value).abs()))
        .ok_or_else(|| Error::config("slice", "no records to slice"))?;
    if (nearest - slice.value).abs() > 1e-9 {
        log::warn!("{}={} is not on the grid; using nearest value {}", slice.param.name(), slice.value, nearest);
    }
    let selected: Vec<&SweepRecord> = records.iter().filter(|r| slice.param.of(r) == nearest).collect();
    let rows = sorted_unique(selected.iter().map(|r| row_param.of(r)).collect());
    let cols = sorted_unique(selected.iter().map(|r| col_param.of(r)).collect());
    let mut values = vec![vec![f64::NAN; cols.len()]; rows.len()];
    let mut failed = vec![vec![false; cols.len()]; rows.len()];
    for rec in selected {
        let i = rows.partition_point(|x| *x < row_param.of(rec));
        let j = cols.partition_point(|x| *x < col_param.of(rec));
        values[i][j] = rec.mean_error;
        failed[i][j] = rec.failed;
    }
    Ok(ErrorMap { row_param, col_param, slice_value: nearest, rows, cols, values, failed })
}
