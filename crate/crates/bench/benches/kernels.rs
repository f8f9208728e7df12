use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use scatter_bench::{batch, operator, shapes};
use scatter_core::dataset::PointCounts;
use scatter_core::geometry::{point_in_shape, shape_from_vector};
use scatter_core::net::{ResNetParams, ResNetPlan};
use scatter_core::oracle::fdfd_solve;
use scatter_core::physics::{loss, loss_gradient};
use scatter_core::{seeded_rng, PhysicsConfig, Vec2};

fn geometry(c: &mut Criterion) {
    let v = shapes(1).shapes[0];
    let curve = shape_from_vector(&v).unwrap();
    c.bench_function("nurbs_evaluate", |b| b.iter(|| curve.evaluate(black_box(0.37)).unwrap()));
    c.bench_function("point_in_shape", |b| b.iter(|| point_in_shape(&curve, black_box(Vec2::new(0.52, 0.47)))));
}

fn network(c: &mut Criterion) {
    let plan = ResNetPlan::standard_trunk();
    let p = ResNetParams::init(&plan, &mut seeded_rng(1)).unwrap();
    c.bench_function("trunk_forward", |b| b.iter(|| p.forward(black_box(&[0.3, 0.6])).unwrap()));
    c.bench_function("trunk_forward_jet", |b| b.iter(|| p.forward_jet(black_box([0.3, 0.6])).unwrap()));
}

fn physics(c: &mut Criterion) {
    let op = operator();
    let counts = PointCounts { interior: 64, inner_boundary: 16, outer_boundary: 16 };
    let b1 = batch(1, counts);
    let mut g = c.benchmark_group("loss");
    g.sample_size(10);
    g.bench_function("value", |b| b.iter(|| loss(&op, &b1).unwrap()));
    g.bench_function("gradient", |b| b.iter(|| loss_gradient(&op, &b1).unwrap()));
    g.finish();
}

fn solvers(c: &mut Criterion) {
    let op = operator();
    let v = shapes(1).shapes[0];
    let physics = PhysicsConfig::default();
    let mut g = c.benchmark_group("field");
    g.sample_size(10);
    for n in [51, 101] {
        g.bench_with_input(BenchmarkId::new("fdfd", n), &n, |b, &n| b.iter(|| fdfd_solve(&v, &physics, n).unwrap()));
    }
    g.bench_function("predict_grid_100", |b| b.iter(|| op.predict_grid(&v, 100).unwrap()));
    g.finish();
}

criterion_group!(benches, geometry, network, physics, solvers);
criterion_main!(benches);
