use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ioc_bench::Fixture;
use ioc_core::filters::{ekf_step, ukf_step, UkfParams};
use ioc_core::{benchmarks, pdp, solver};

fn forward_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    for name in benchmarks::REQUIRED {
        let fx = Fixture::new(name);
        let theta = fx.options.prior_mean.clone();
        group.bench_function(BenchmarkId::new("cold", name), |b| {
            b.iter(|| solver::solve(&fx.spec.model, &theta, &fx.options.solver, None).unwrap())
        });
        group.bench_function(BenchmarkId::new("warm", name), |b| {
            b.iter(|| solver::solve(&fx.spec.model, &fx.spec.ground_truth, &fx.options.solver, Some(&fx.truth)).unwrap())
        });
    }
    group.finish();
}

fn jacobian(c: &mut Criterion) {
    let mut group = c.benchmark_group("pdp_jacobian");
    for name in benchmarks::REQUIRED {
        let fx = Fixture::new(name);
        let t = fx.spec.horizon() / 2;
        group.bench_function(name, |b| {
            b.iter(|| pdp::jacobian(t, &fx.spec.ground_truth, &fx.truth, fx.selection.matrix(), &fx.spec.model).unwrap())
        });
    }
    group.finish();
}

fn filter_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("filter_step");
    group.sample_size(20);
    for name in benchmarks::REQUIRED {
        let fx = Fixture::new(name);
        let t = fx.spec.horizon() / 2;
        let belief = fx.belief_before(t);
        let q = fx.options.process_noise.at(t).unwrap().clone();
        let record = &fx.records[t];
        group.bench_function(BenchmarkId::new("ekf", name), |b| {
            b.iter(|| {
                ekf_step(&belief, record, &fx.spec.model, &fx.selection, &fx.noise, &q, &fx.options.solver, Some(&fx.truth)).unwrap()
            })
        });
        group.bench_function(BenchmarkId::new("ukf", name), |b| {
            b.iter(|| {
                ukf_step(
                    &belief,
                    record,
                    &fx.spec.model,
                    &fx.selection,
                    &fx.noise,
                    &q,
                    &fx.options.solver,
                    &UkfParams::default(),
                    Some(&fx.truth),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, forward_solve, jacobian, filter_step);
criterion_main!(benches);
