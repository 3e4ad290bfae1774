use std::hint::black_box;

use bruijn_regret::game::value_exact;
use bruijn_regret::local::h_tables;
use bruijn_regret::quadrature::gauss_hermite_tensor;
use bruijn_regret::{Engine, ExpertPanel, GameSpec, HessianContext, LatticeTable, Payoff, PdeSolution};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;

fn lattice(c: &mut Criterion) {
    let panel = ExpertPanel::constant(1, &[1.0, -1.0]).unwrap();
    let mut group = c.benchmark_group("lattice");
    for steps in [64usize, 256, 1024] {
        group.bench_with_input(BenchmarkId::from_parameter(steps), &steps, |b, &s| {
            b.iter(|| LatticeTable::build(&panel, &Payoff::Max, &[0.0, 0.0], black_box(s), false).unwrap())
        });
    }
    group.finish();

    let random = ExpertPanel::random_grid(3, 2, 4, 1).unwrap();
    let spec = GameSpec::new(&random, &Payoff::Max, 14, vec![0.0; 3], random.states()[0], 1).unwrap();
    c.bench_function("path/n3_d2_13_steps", |b| b.iter(|| value_exact(black_box(&spec), Engine::Path).unwrap()));
}

fn quadrature(c: &mut Criterion) {
    let panel = ExpertPanel::constant(1, &[1.0, -1.0]).unwrap();
    let sol = PdeSolution::with_defaults(&panel, &Payoff::Max).unwrap();
    c.bench_function("pde/u_1d_adaptive", |b| b.iter(|| sol.evaluate_u(black_box(&[0.1, -0.2]), 0.3).unwrap()));
    let rule = gauss_hermite_tensor(2, 32).unwrap();
    c.bench_function("quadrature/hermite_2d_32", |b| {
        b.iter(|| rule.integrate(&mut |z: &[f64]| (z[0].max(z[1])).abs()))
    });
}

fn h_recursion(c: &mut Criterion) {
    let mut group = c.benchmark_group("h_tables");
    for d in [2usize, 6, 10] {
        let panel = ExpertPanel::random_grid(3, d, 8, 5).unwrap();
        let ctx = HessianContext::new(DMatrix::identity(3, 3), vec![1.0; 3]).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            b.iter(|| h_tables(&ctx, &panel, black_box(20)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, lattice, quadrature, h_recursion);
criterion_main!(benches);
