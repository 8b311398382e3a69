use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use coni_core::dynamics::RelativeState;
use coni_core::geom::{Quat, Vec3};
use coni_core::harness::{sweep, ExperimentConfig, Parallelism, ParamRange, Scheme, SweepGrid};
use coni_core::mpc::{solve, MpcConfig};
use coni_core::reference::fixed_point_window;

fn bench_sweep(c: &mut Criterion) {
    let base =
        ExperimentConfig { duration: 1.0, settle: 0.0, ..ExperimentConfig::new(Scheme::FixedPoint, 1.0, 1.0, 0.31) };
    let grid = SweepGrid {
        r: ParamRange::new(0.0, 2.0, 0.5),
        v: ParamRange::new(0.0, 2.0, 1.0),
        omega: ParamRange::new(0.01, 2.01, 1.0),
    };
    let mut group = c.benchmark_group("sweep_45_cells");
    group.sample_size(10);
    let modes = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Threads(0))];
    for (name, par) in modes {
        group.bench_with_input(BenchmarkId::from_parameter(name), &par, |b, &par| {
            b.iter(|| sweep(black_box(&base), &grid, par).unwrap())
        });
    }
    group.finish();
}

fn bench_solve(c: &mut Criterion) {
    let cfg = MpcConfig::default();
    let x0 = RelativeState {
        p: Vec3::new(0.5, -0.3, 0.2),
        v: Vec3::new(0.1, 0.0, 0.0),
        q: Quat::IDENTITY,
        a_meas: Vec3::new(0.0, 0.3, 9.8),
        omega_meas: Vec3::new(0.0, 0.0, 0.31),
        beta: Vec3::zeros(),
    };
    let window = fixed_point_window(Vec3::zeros(), cfg.steps());
    let cold = solve(&x0, &window, &cfg, None).unwrap();
    c.bench_function("mpc_solve_cold", |b| b.iter(|| solve(black_box(&x0), &window, &cfg, None).unwrap()));
    c.bench_function("mpc_solve_warm", |b| b.iter(|| solve(black_box(&x0), &window, &cfg, Some(&cold)).unwrap()));
}

criterion_group!(benches, bench_sweep, bench_solve);
criterion_main!(benches);
