use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use poroiter_core::integrators::{bdf2_implicit_step, integrate, novel_scheme_step, StepWorkspace};
use poroiter_core::problems::unit_square_problem;
use poroiter_core::spectral::{build_iteration_matrices, script_s_norm};
use poroiter_core::system::{
    coupling_strength, relaxation_gamma, solve_static, Scheme, SchemeConfig, TimeGrid,
};
use std::hint::black_box;

fn single_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for n in [8, 16] {
        let problem = unit_square_problem(1.0, n).unwrap();
        let sys = &problem.system;
        let tau = 1.0 / 32.0;
        let ws = StepWorkspace::new(sys, tau).unwrap();
        let s0 = solve_static(sys, 0.0).unwrap();
        let s1 = solve_static(sys, tau).unwrap();
        for k in [1, 2, 4] {
            group.bench_with_input(BenchmarkId::new(format!("novel_K{k}"), n), &k, |b, &k| {
                b.iter(|| novel_scheme_step(&ws, black_box(&s0), black_box(&s1), k, 0.6).unwrap())
            });
        }
        group.bench_with_input(BenchmarkId::new("implicit", n), &n, |b, _| {
            b.iter(|| bdf2_implicit_step(&ws, black_box(&s0), black_box(&s1)).unwrap())
        });
    }
    group.finish();
}

fn trajectory(c: &mut Criterion) {
    let problem = unit_square_problem(1.0, 8).unwrap();
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let mut group = c.benchmark_group("trajectory_n8_N64");
    group.sample_size(20);
    for (name, cfg) in [
        ("novel_K2", SchemeConfig::new(Scheme::NovelIterative).with_k(2)),
        ("implicit", SchemeConfig::new(Scheme::ImplicitBdf2)),
        ("fixed_stress", SchemeConfig::new(Scheme::FixedStressBdf2)),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| integrate(&problem.system, &grid, &cfg, &problem.initial).unwrap())
        });
    }
    group.finish();
}

fn spectral(c: &mut Criterion) {
    let problem = unit_square_problem(1.0, 8).unwrap();
    let sys = &problem.system;
    c.bench_function("coupling_strength_n8", |b| {
        b.iter(|| coupling_strength(black_box(sys), 0.0).unwrap())
    });
    let gamma = relaxation_gamma(coupling_strength(sys, 0.0).unwrap()).unwrap();
    let m = build_iteration_matrices(sys, 0.0, gamma, 3).unwrap();
    c.bench_function("recursion_radius_n8", |b| b.iter(|| script_s_norm(black_box(&m)).unwrap()));
}

criterion_group!(benches, single_step, trajectory, spectral);
criterion_main!(benches);
