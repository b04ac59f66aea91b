use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use impulse_bench::{default_problem, grid, ou_model};
use impulse_core::{bellman_apply, build_kernel, entropic_utility, GridFunction, Reward, RiskParams};

fn entropic(c: &mut Criterion) {
    let mut group = c.benchmark_group("entropic_utility");
    let params = RiskParams::new(-0.5).unwrap();
    for n in [100usize, 2000, 20_000] {
        let z: Vec<f64> = (0..n).map(|i| ((i * 7919) % 1000) as f64 / 100.0).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &z, |b, z| {
            b.iter(|| entropic_utility(black_box(z), params).unwrap())
        });
    }
    group.finish();
}

fn bellman(c: &mut Criterion) {
    let (kernel, problem) = default_problem(201, 2000);
    let params = RiskParams::new(-0.5).unwrap();
    let g = GridFunction::from_fn(kernel.grid(), |x| -0.1 * x * x);
    c.bench_function("bellman_apply/201x2000", |b| {
        b.iter(|| bellman_apply(&kernel, black_box(&g), &problem, params).unwrap())
    });
}

fn kernel(c: &mut Criterion) {
    let model = ou_model();
    let grid = grid(101);
    let reward = Reward::peak(1.0);
    let mut group = c.benchmark_group("build_kernel");
    group.sample_size(10);
    group.bench_function("101x500", |b| {
        b.iter(|| build_kernel(&model, &grid, &reward, 0.5, 500, black_box(7)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, entropic, bellman, kernel);
criterion_main!(benches);
