use axivort_core::kernel::{log_grid, Dimension, KernelEvaluator, KernelTable, ProfileKernel};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn profile(c: &mut Criterion) {
    let grid = log_grid(1e-6, 1e6, 256);
    let mut group = c.benchmark_group("profile");
    for d in [3, 4, 6] {
        let dim = Dimension::new(d).unwrap();
        let evaluator = KernelEvaluator::new(dim);
        let table = KernelTable::build(evaluator.clone()).unwrap();
        group.bench_with_input(BenchmarkId::new("quadrature", d), &grid, |b, grid| {
            b.iter(|| {
                for &s in grid {
                    black_box(evaluator.eval_fd(black_box(s)).unwrap());
                }
            })
        });
        group.bench_with_input(BenchmarkId::new("table", d), &grid, |b, grid| {
            b.iter(|| {
                for &s in grid {
                    black_box(table.profile(black_box(s)).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn table_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("table_build");
    group.sample_size(10);
    group.bench_function("d4", |b| {
        b.iter(|| KernelTable::build(KernelEvaluator::new(Dimension::new(4).unwrap())).unwrap())
    });
    group.finish();
}

criterion_group!(benches, profile, table_build);
criterion_main!(benches);
