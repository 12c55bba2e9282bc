use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use satlms::moments::closed_form;
use satlms::*;

fn params() -> SystemParams {
    SystemParams::new(1.0, 1.0, 0.01, 1.5, 0.5)
}

fn moments(c: &mut Criterion) {
    let p = params();
    let state = MacroState::new(0.8, 0.7);
    c.bench_function("closed_form/all_kinds", |b| {
        b.iter(|| MomentKind::ALL.iter().map(|&k| closed_form(k, black_box(&p), black_box(state))).sum::<f64>())
    });
}

fn theory(c: &mut Criterion) {
    let p = params();
    let cfg = IntegratorConfig::new(0.01, 100.0, 100);
    c.bench_function("integrate/t100_dt0.01", |b| {
        b.iter(|| integrate(black_box(&p), MacroState::ORIGIN, &cfg).unwrap())
    });
    c.bench_function("steady_state/S1.5", |b| b.iter(|| steady_state(black_box(&p)).unwrap()));
}

fn simulation(c: &mut Criterion) {
    let p = params();
    let cfg = SimConfig { taps: 100, trials: 16, t_end: 5.0, ..SimConfig::default() };
    let mut g = c.benchmark_group("run_ensemble");
    g.sample_size(20);
    g.bench_function("N100_trials16_t5", |b| b.iter(|| run_ensemble(black_box(&cfg), &p).unwrap()));
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let grid = ParamGrid::default();
    let quad = QuadConfig::with_nodes(50);
    let mut g = c.benchmark_group("check_all");
    g.sample_size(10);
    g.bench_function("default_grid_nodes50", |b| b.iter(|| check_all(black_box(&grid), &quad).unwrap()));
    g.finish();
}

criterion_group!(benches, moments, theory, simulation, oracle);
criterion_main!(benches);
