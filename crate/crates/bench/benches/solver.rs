use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use respose_bench::minimal_scenes;
use respose_core::bkk::{gauge_support, match_support, mixed_volume, newton_polytope};
use respose_core::dixon::pencil_from_constraints;
use respose_core::polyeig::{solve_polynomial, MatrixPolynomial};
use respose_core::robust::SceneGeometry;
use respose_core::solver::{solve_pose, SolverOptions};

fn solve(c: &mut Criterion) {
    let opts = SolverOptions::default();
    let mut group = c.benchmark_group("solve_pose");
    group.sample_size(20);
    for (name, geometry) in [("generic", SceneGeometry::General), ("four_two", SceneGeometry::FourTwo)] {
        let scenes = minimal_scenes(8, geometry);
        let mut i = 0;
        group.bench_function(name, |b| {
            b.iter(|| {
                i = (i + 1) % scenes.len();
                solve_pose(black_box(&scenes[i]), &opts)
            })
        });
    }
    group.finish();
}

fn stages(c: &mut Criterion) {
    let scene = &minimal_scenes(1, SceneGeometry::General)[0];
    let constraints = scene.constraints().unwrap();
    c.bench_function("pencil_from_constraints", |b| b.iter(|| pencil_from_constraints(black_box(&constraints))));
    let pencil = pencil_from_constraints(&constraints).unwrap();
    let poly = MatrixPolynomial::from(&pencil);
    let mut group = c.benchmark_group("eigen");
    group.sample_size(20);
    group.bench_function("solve_polynomial", |b| b.iter(|| solve_polynomial(black_box(&poly))));
    group.finish();
}

fn bounds(c: &mut Criterion) {
    let quadratic = newton_polytope(&match_support(true)).unwrap();
    let gauge = newton_polytope(&gauge_support()).unwrap();
    let mut polys = vec![quadratic; 6];
    polys.push(gauge);
    let mut group = c.benchmark_group("bkk");
    group.sample_size(10);
    group.bench_function("mixed_volume_quadratic", |b| b.iter(|| mixed_volume(black_box(&polys))));
    group.finish();
}

criterion_group!(benches, solve, stages, bounds);
criterion_main!(benches);
