//! Timings of the pipeline stages at the default problem size.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use contingent_csa::curve::{build_curve, eur_2012_quotes};
use contingent_csa::dynamics::{simulate_paths, TimeGrid};
use contingent_csa::scenario::{prepare, solve_prepared, ScenarioConfig};
use contingent_csa::solver::{regress_continuation, RegressionBasis};

fn simulation(c: &mut Criterion) {
    let cfg = ScenarioConfig::default();
    let curve = build_curve(&eur_2012_quotes()).unwrap();
    let params = cfg.model_params();
    let grid = TimeGrid::new(cfg.n_steps, 1.0).unwrap();
    c.bench_function("simulate 1000x252", |b| {
        b.iter(|| simulate_paths(&params, &curve, grid, cfg.n_paths, black_box(cfg.seed)).unwrap())
    });
}

fn regression(c: &mut Criterion) {
    let prepared = prepare(&ScenarioConfig::default()).unwrap();
    let step = 126;
    let states: Vec<(f64, f64)> = (0..prepared.paths.n_paths())
        .map(|p| (prepared.paths.short_rate[[step, p]], prepared.paths.intensity[[step, p]]))
        .collect();
    let targets: Vec<f64> = prepared.npv().row(step + 1).to_vec();
    let basis = RegressionBasis::rate_and_intensity();
    c.bench_function("regress 1000 states", |b| {
        b.iter(|| regress_continuation(black_box(&states), &targets, &basis).unwrap())
    });
}

fn solve(c: &mut Criterion) {
    let cfg = ScenarioConfig::default().resolved().unwrap();
    let prepared = prepare(&cfg).unwrap();
    c.bench_function("prepare 1000x252", |b| b.iter(|| prepare(black_box(&cfg)).unwrap()));
    c.bench_function("solve 1000x252", |b| b.iter(|| solve_prepared(black_box(&prepared), &cfg).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = simulation, regression, solve
}
criterion_main!(benches);
