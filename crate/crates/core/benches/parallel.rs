use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cayley_rd::dynamics::evolve_site_ode;
use cayley_rd::lattice::build_tree;
use cayley_rd::stochastic::{ensemble_mean, EnsembleConfig, InitSpec};
use cayley_rd::{DensityField, Execution, GreenEvaluator, RateModel, SpectralParams};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn ensemble(c: &mut Criterion) {
    let model = RateModel::annihilation_creation(3, 1.0).unwrap();
    let config = EnsembleConfig {
        runs: 2_000,
        master_seed: 1,
        t_samples: vec![0.5, 1.0],
        tree: build_tree(3, 5).unwrap(),
    };
    let init = InitSpec::Bernoulli(0.5);
    let mut group = c.benchmark_group("ensemble_mean");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| ensemble_mean(&model, &config, &init, exec).unwrap())
        });
    }
    group.finish();
}

fn green_matrix(c: &mut Criterion) {
    let e = GreenEvaluator::new(SpectralParams::new(3, 1.0, 1.0).unwrap());
    let mut group = c.benchmark_group("green_matrix");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| e.green_matrix(30, 30, 2.0, exec).unwrap())
        });
    }
    group.finish();
}

fn site_ode(c: &mut Criterion) {
    let model = RateModel::annihilation_creation(3, 1.0).unwrap();
    let tree = build_tree(3, 14).unwrap();
    let init = DensityField::per_site((0..tree.sites()).map(|i| (i % 7) as f64 / 7.0).collect());
    let mut group = c.benchmark_group("site_ode");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evolve_site_ode(&model, &tree, &init, 0.5, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ensemble, green_matrix, site_ode);
criterion_main!(benches);
