use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use entropic_pricer_bench::capped_square;
use entropic_pricer_core::bsde::{cole_hopf_oracle, solve_pde_fd, solve_regression_mc};
use entropic_pricer_core::duality::{duality_gap, optimizer_measure};
use entropic_pricer_core::market_paths::simulate;
use entropic_pricer_core::quadrature::QuadConfig;
use entropic_pricer_core::{Estimate, McConfig, PdeConfig, W2Payoff};

fn paths(c: &mut Criterion) {
    let fx = capped_square(50);
    c.bench_function("simulate 20k x 50", |b| {
        b.iter(|| simulate(&fx.params, fx.grid, black_box(20_000), 1).unwrap())
    });
}

fn regression(c: &mut Criterion) {
    let mut group = c.benchmark_group("regression_mc");
    group.sample_size(10);
    for m in [10_000, 50_000] {
        let fx = capped_square(25);
        let bundle = fx.bundle(m);
        group.bench_with_input(BenchmarkId::from_parameter(m), &bundle, |b, bundle| {
            b.iter(|| solve_regression_mc(&fx.claim, &fx.integrand, &fx.params, bundle, &McConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn pde(c: &mut Criterion) {
    let mut group = c.benchmark_group("pde_fd");
    group.sample_size(10);
    for nodes in [201, 801] {
        let fx = capped_square(50);
        let cfg = PdeConfig {
            nodes,
            ..PdeConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(nodes), &cfg, |b, cfg| {
            b.iter(|| solve_pde_fd(&fx.claim, &fx.integrand, &fx.params, fx.grid, cfg).unwrap())
        });
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let payoff = W2Payoff::CappedSquare { cap: 4.0 };
    let cfg = QuadConfig::default();
    c.bench_function("cole_hopf_oracle", |b| {
        b.iter(|| cole_hopf_oracle(|w| payoff.eval(w), &[-2.0, 2.0], black_box(0.25), 1.0, &cfg).unwrap())
    });
}

fn duality(c: &mut Criterion) {
    let fx = capped_square(25);
    let bundle = fx.bundle(20_000);
    let sol = solve_pde_fd(&fx.claim, &fx.integrand, &fx.params, fx.grid, &PdeConfig::default()).unwrap();
    let spec = optimizer_measure(&sol, &fx.integrand).unwrap();
    let f = Estimate::exact(sol.y0);
    let mut group = c.benchmark_group("duality");
    group.sample_size(10);
    group.bench_function("gap at optimizer 20k x 25", |b| {
        b.iter(|| duality_gap(&fx.claim, &spec, &fx.integrand, f, &bundle, &fx.params).unwrap())
    });
    group.finish();
}

criterion_group!(benches, paths, regression, pde, oracle, duality);
criterion_main!(benches);
