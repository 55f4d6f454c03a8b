use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kforge::balanced::{run_iteration, sweep, t_canonical_step};
use kforge::quadrature::{DEFAULT_RADIUS, DEFAULT_RESOLUTION};
use kforge::{Execution, FanoPolygon, IterationConfig, MetricWeights, SampleCloud, Scheme, SectionBasis};
use std::sync::Arc;

fn modes(hex: &FanoPolygon) -> Vec<(&'static str, SampleCloud)> {
    let cloud = SampleCloud::build(hex, DEFAULT_RESOLUTION, DEFAULT_RADIUS).unwrap();
    vec![("sequential", cloud.clone().with_execution(Execution::Sequential)), ("parallel", cloud)]
}

fn steps(c: &mut Criterion) {
    let hex = FanoPolygon::hexagon();
    let mut group = c.benchmark_group("canonical_step");
    group.sample_size(10);
    for rank in [4u32, 8] {
        let w = MetricWeights::uniform(Arc::new(SectionBasis::new(&hex, rank).unwrap()));
        for (name, cloud) in modes(&hex) {
            group.bench_with_input(BenchmarkId::new(name, rank), &w, |b, w| {
                b.iter(|| t_canonical_step(black_box(w), &cloud).unwrap())
            });
        }
    }
    group.finish();

    let mut group = c.benchmark_group("sigma_sweep");
    group.sample_size(10);
    let w = MetricWeights::uniform(Arc::new(SectionBasis::new(&hex, 4).unwrap()));
    for (name, cloud) in modes(&hex) {
        group.bench_function(name, |b| b.iter(|| sweep(black_box(&w), &cloud, None, true)));
    }
    group.finish();
}

fn table(c: &mut Criterion) {
    let hex = FanoPolygon::hexagon();
    let mut group = c.benchmark_group("run_r4_15");
    group.sample_size(10);
    for (name, cloud) in modes(&hex) {
        for scheme in [Scheme::Balanced, Scheme::Canonical] {
            let mut cfg = IterationConfig::new(scheme, 4, 15);
            cfg.tol = 0.0;
            cfg.record_functionals = false;
            cfg.record_timing = false;
            group.bench_function(BenchmarkId::new(name, scheme), |b| {
                b.iter(|| run_iteration(black_box(&cfg), &hex, &cloud).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, steps, table);
criterion_main!(benches);
