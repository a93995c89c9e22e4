use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use practsig_core::compare::{psis_loo, waic, LogLikMatrix};
use practsig_core::cpt::{expected_utility, CostProfile, Prospect, WeightingParams};
use practsig_core::model::{log_posterior, ModelSpec, ParameterVector};
use practsig_core::posterior::{Posterior, SubjectMode};
use practsig_core::sampler::SamplerConfig;
use practsig_core::scenarios::{evaluate_scenario, EvalConfig, Scenario};
use practsig_core::synthetic::{generate, DesignSpec};

fn log_density(c: &mut Criterion) {
    let data = generate(&ParameterVector::study_means(), &DesignSpec::study(), &ModelSpec::m2(), 1).unwrap();
    let m1 = ParameterVector::m1(1.95, -1.47, 0.33);
    let m2 = ParameterVector::study_means().with_subjects(vec![0.1; data.n_subjects()]);
    c.bench_function("log_posterior m1, 35 rows", |b| b.iter(|| log_posterior(black_box(&m1), &data, &ModelSpec::m1())));
    c.bench_function("log_posterior m2, 35 rows", |b| b.iter(|| log_posterior(black_box(&m2), &data, &ModelSpec::m2())));
}

fn fitting(c: &mut Criterion) {
    let data = generate(&ParameterVector::study_means(), &DesignSpec::study(), &ModelSpec::m2(), 1).unwrap();
    let cfg = SamplerConfig { chains: 2, warmup_iterations: 200, retained_draws_per_chain: 200, ..Default::default() };
    let mut g = c.benchmark_group("fit");
    g.sample_size(10);
    g.bench_function("m1 2x(200+200)", |b| b.iter(|| Posterior::fit(&data, ModelSpec::m1(), &cfg).unwrap()));
    g.bench_function("m2 2x(200+200)", |b| b.iter(|| Posterior::fit(&data, ModelSpec::m2(), &cfg).unwrap()));
    g.finish();
}

fn comparison(c: &mut Criterion) {
    let data = generate(&ParameterVector::study_means(), &DesignSpec::study(), &ModelSpec::m2(), 2).unwrap();
    let post = Posterior::fit(&data, ModelSpec::m2(), &SamplerConfig { seed: 2, ..Default::default() }).unwrap();
    let ll = LogLikMatrix::from_posterior("m2", &post, &data).unwrap();
    c.bench_function("psis_loo 4000x35", |b| b.iter(|| psis_loo(black_box(&ll)).unwrap()));
    c.bench_function("waic 4000x35", |b| b.iter(|| waic(black_box(&ll)).unwrap()));

    let cfg = EvalConfig { n_rep: 1, subject: SubjectMode::Average, ..Default::default() };
    let mut g = c.benchmark_group("utility");
    g.sample_size(20);
    g.bench_function("experience scenario, 4000 draws", |b| {
        b.iter(|| {
            evaluate_scenario(&post, &Scenario::experience(), &CostProfile::default(), &WeightingParams::default(), &cfg)
                .unwrap()
        })
    });
    g.finish();
}

fn prospect(c: &mut Criterion) {
    let n = 200;
    let outcomes: Vec<(f64, f64)> = (0..n).map(|i| (i as f64 * 37.0 - 3000.0, 1.0 / n as f64)).collect();
    let p = Prospect::new(outcomes).unwrap();
    let w = WeightingParams::default();
    c.bench_function("cumulative utility, 200 outcomes", |b| b.iter(|| expected_utility(black_box(&p), &w).unwrap()));
}

criterion_group!(benches, log_density, fitting, comparison, prospect);
criterion_main!(benches);
