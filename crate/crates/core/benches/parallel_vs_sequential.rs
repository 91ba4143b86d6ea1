use std::hint::black_box;

use aniso_field::covariance::gram;
use aniso_field::grid::delta_ball_grid;
use aniso_field::sampler::{cholesky_factor, sample_ensemble};
use aniso_field::{Execution, FieldModel, Point, QuadratureSpec, SpdeModel};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const POLICIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn setup() -> (FieldModel, Vec<Point>) {
    let model: FieldModel = SpdeModel::new(2.0, 0.5, 0.5, 1).into();
    let points = delta_ball_grid(&model, &Point::new(vec![1.0, 0.0]), 0.1, 2).unwrap();
    (model, points)
}

fn bench_gram(c: &mut Criterion) {
    let (model, points) = setup();
    let spec = QuadratureSpec::default();
    let mut group = c.benchmark_group("gram");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::new(name, points.len()), &exec, |b, &exec| {
            b.iter(|| gram(black_box(&model), &points, &spec, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_sampling(c: &mut Criterion) {
    let (model, points) = setup();
    let g = gram(&model, &points, &QuadratureSpec::default(), Execution::default()).unwrap();
    let factor = cholesky_factor(&g).unwrap();
    let mut group = c.benchmark_group("sample_ensemble");
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::new(name, 5000), &exec, |b, &exec| {
            b.iter(|| sample_ensemble(black_box(&factor), 5000, 7, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_gram, bench_sampling);
criterion_main!(benches);
