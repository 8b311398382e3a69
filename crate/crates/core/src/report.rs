//! CSV and JSON artifacts.
//!
//! Everything here except [`RunManifest`] is a pure function of the inputs,
//! so the same run written twice produces identical bytes.

use std::io::{self, Write};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::harness::{ErrorMap, ExperimentConfig, RunResult, StepRecord, SweepRecord};
use crate::target::ImuSample;

pub const SCHEMA_VERSION: u32 = 1;

pub const TIMESERIES_HEADER: &str = "t,ex,ey,ez,e_norm,thrust,wx,wy,wz,kkt_residual";
pub const SWEEP_HEADER: &str = "scheme,r,v,omega,mean_error_m,max_error_m,failed,solver_mean_ms,fallbacks";
pub const IMU_HEADER: &str = "t,ax,ay,az,wx,wy,wz";

pub fn write_timeseries_csv(steps: &[StepRecord], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "{TIMESERIES_HEADER}")?;
    for s in steps {
        let (e, u) = (s.error, s.input);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            s.t,
            e.x,
            e.y,
            e.z,
            e.norm(),
            u.thrust,
            u.omega_b.x,
            u.omega_b.y,
            u.omega_b.z,
            s.kkt_residual
        )?;
    }
    Ok(())
}

pub fn write_sweep_csv(records: &[SweepRecord], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in records {
        let ms = r.solver_mean_ms.map(|m| m.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.scheme.as_str(),
            r.r,
            r.v,
            r.omega,
            r.mean_error,
            r.max_error,
            r.failed,
            ms,
            r.fallbacks
        )?;
    }
    Ok(())
}

fn write_matrix<T: std::fmt::Display>(map: &ErrorMap, cells: &[Vec<T>], mut w: impl Write) -> io::Result<()> {
    write!(w, "{}\\{}", map.row_param.name(), map.col_param.name())?;
    for c in &map.cols {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    for (row, values) in map.rows.iter().zip(cells) {
        write!(w, "{row}")?;
        for v in values {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Mean errors with parameter values as row and column headers.
pub fn write_error_map_csv(map: &ErrorMap, w: impl Write) -> io::Result<()> {
    write_matrix(map, &map.values, w)
}

/// 1 where the cell's mean error exceeds the failure threshold.
pub fn write_failure_mask_csv(map: &ErrorMap, w: impl Write) -> io::Result<()> {
    let mask: Vec<Vec<u8>> = map.failed.iter().map(|r| r.iter().map(|f| *f as u8).collect()).collect();
    write_matrix(map, &mask, w)
}

pub fn write_imu_csv(samples: &[ImuSample], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "{IMU_HEADER}")?;
    for s in samples {
        let (a, o) = (s.a_meas, s.omega_meas);
        writeln!(w, "{},{},{},{},{},{},{}", s.t, a.x, a.y, a.z, o.x, o.y, o.z)?;
    }
    Ok(())
}

/// Deterministic summary of one run.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub scheme: &'static str,
    pub r: f64,
    pub v: f64,
    pub omega: f64,
    pub seed: u64,
    pub mean_error: f64,
    pub max_error: f64,
    pub failed: bool,
    pub final_distance: f64,
    pub samples: usize,
    pub fallbacks: usize,
    pub max_iterations: usize,
    pub inputs_within_bounds: bool,
    pub solver_mean_ms: Option<f64>,
}

impl RunSummary {
    pub fn new(cfg: &ExperimentConfig, res: &RunResult) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scheme: cfg.scheme.as_str(),
            r: cfg.r,
            v: cfg.v,
            omega: cfg.omega,
            seed: cfg.seed,
            mean_error: res.mean_error,
            max_error: res.max_error,
            failed: res.failed,
            final_distance: res.final_distance,
            samples: res.errors.len(),
            fallbacks: res.fallbacks,
            max_iterations: res.max_iterations,
            inputs_within_bounds: res.inputs_within_bounds,
            solver_mean_ms: res.solver_mean_ms,
        }
    }
}

/// Provenance of a command's outputs; the one artifact that carries
/// timestamps.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub config: ExperimentConfig,
    pub outputs: Vec<PathBuf>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig, started: f64, outputs: Vec<PathBuf>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed: config.seed,
            started_unix_s: started,
            finished_unix_s: unix_now(),
            config: config.clone(),
            outputs,
        }
    }
}
