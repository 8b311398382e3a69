use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coni_core::config::{load_config, ConfigFile};
use coni_core::harness::{error_map, run_experiment, sweep, Parallelism, Slice};
use coni_core::report::{
    unix_now, write_error_map_csv, write_failure_mask_csv, write_sweep_csv, write_timeseries_csv, RunManifest,
    RunSummary,
};
use coni_core::{verify, Error, Result};

#[derive(Parser)]
#[command(name = "coni", version, about = "Relative-frame quadrotor MPC: experiments, sweeps and self-checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop experiment.
    Run(Common),
    /// Run every cell of a parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads (defaults to the number of CPUs).
        #[arg(long)]
        jobs: Option<usize>,
        /// Export an error map with one parameter fixed, e.g. `omega=0.31`.
        #[arg(long, value_name = "PARAM=VALUE")]
        slice: Vec<Slice>,
    },
    /// Check the models against independent oracles.
    Verify,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<ConfigFile> {
        let mut cfg = load_config(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.experiment.seed = seed;
        }
        fs::create_dir_all(&self.out)?;
        Ok(cfg)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn cmd_run(args: &Common) -> Result<()> {
    let started = unix_now();
    let cfg = args.load()?;
    let exp = &cfg.experiment;
    let result = run_experiment(exp)?;

    let series = args.out.join("timeseries.csv");
    let mut w = create(&series)?;
    write_timeseries_csv(&result.steps, &mut w)?;
    w.flush()?;

    let summary_path = args.out.join("summary.json");
    let summary = RunSummary::new(exp, &result);
    write_json(&summary_path, &summary)?;

    let outputs = vec![summary_path, series];
    write_json(&args.out.join("manifest.json"), &RunManifest::new("run", exp, started, outputs))?;

    println!(
        "{} r={} v={} omega={}: mean error {:.4} m, max {:.4} m{}",
        exp.scheme.as_str(),
        exp.r,
        exp.v,
        exp.omega,
        result.mean_error,
        result.max_error,
        if result.failed { " (FAILED)" } else { "" }
    );
    Ok(())
}

fn cmd_sweep(args: &Common, jobs: Option<usize>, slices: &[Slice]) -> Result<()> {
    let started = unix_now();
    let cfg = args.load()?;
    let grid = cfg.grid();
    let parallelism = match jobs {
        Some(0) => return Err(Error::InvalidConfig { key: "jobs".into(), reason: "must be at least 1".into() }),
        Some(1) => Parallelism::Sequential,
        Some(n) => Parallelism::Threads(n),
        None => Parallelism::Threads(0),
    };
    let records = sweep(&cfg.experiment, &grid, parallelism)?;

    let csv = args.out.join("sweep.csv");
    let mut w = create(&csv)?;
    write_sweep_csv(&records, &mut w)?;
    w.flush()?;
    let mut outputs = vec![csv];

    for slice in slices {
        let map = error_map(&records, *slice)?;
        let stem = format!("error_map_{}_{}", slice.param.name(), map.slice_value);
        let values = args.out.join(format!("{stem}.csv"));
        let mut w = create(&values)?;
        write_error_map_csv(&map, &mut w)?;
        w.flush()?;
        let mask = args.out.join(format!("{stem}_failed.csv"));
        let mut w = create(&mask)?;
        write_failure_mask_csv(&map, &mut w)?;
        w.flush()?;
        outputs.extend([values, mask]);
    }
    write_json(&args.out.join("manifest.json"), &RunManifest::new("sweep", &cfg.experiment, started, outputs))?;

    let failed = records.iter().filter(|r| r.failed).count();
    println!("{} cells, {failed} failed", records.len());
    Ok(())
}

fn cmd_verify() -> bool {
    let checks = verify::run_all();
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!("{} checks, {failed} failed", checks.len());
    failed == 0
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep { common, jobs, slice } => cmd_sweep(common, *jobs, slice),
        Command::Verify => {
            return if cmd_verify() { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::InvalidConfig { .. } | Error::ConfigParse(_)) { 2 } else { 1 })
        }
    }
}
