use axivort_core::biot_savart::{self_velocities, velocity_field};
use axivort_core::config::RunConfig;
use axivort_core::initial::build_initial_ensemble;
use axivort_core::kernel::{Dimension, HalfPlanePoint, KernelTable};
use axivort_core::transport::step;
use axivort_core::SimulationState;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn ensemble(d: u32, n: usize) -> axivort_core::ParticleEnsemble {
    let mut cfg = RunConfig::new(Dimension::new(d).unwrap());
    cfg.n_target = n;
    build_initial_ensemble(&cfg).unwrap().0
}

fn fields(c: &mut Criterion) {
    let mut group = c.benchmark_group("velocity");
    group.sample_size(10);
    for n in [256, 1024] {
        let ens = ensemble(4, n);
        let kernel = KernelTable::shared(ens.dim()).unwrap();
        group.bench_with_input(BenchmarkId::new("self_velocities", n), &ens, |b, ens| {
            b.iter(|| self_velocities(ens, kernel.as_ref(), 0.02).unwrap())
        });
        let targets: Vec<HalfPlanePoint> = (0..64)
            .map(|i| HalfPlanePoint::new(0.5 + 0.05 * i as f64, 0.1))
            .collect();
        group.bench_with_input(BenchmarkId::new("field_64_targets", n), &ens, |b, ens| {
            b.iter(|| velocity_field(ens, kernel.as_ref(), black_box(&targets), 0.02).unwrap())
        });
    }
    group.finish();
}

fn rk4(c: &mut Criterion) {
    let mut group = c.benchmark_group("rk4_step");
    group.sample_size(10);
    let ens = ensemble(4, 1024);
    let kernel = KernelTable::shared(ens.dim()).unwrap();
    let state = SimulationState::new(ens);
    group.bench_function("d4_n1024", |b| b.iter(|| step(&state, kernel.as_ref(), 0.01, 0.02).unwrap()));
    group.finish();
}

criterion_group!(benches, fields, rk4);
criterion_main!(benches);
