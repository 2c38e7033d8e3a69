use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nestwalk_core::environment::{sample_environment, ConductanceLaw, SeededStream, StreamPurpose};
use nestwalk_core::ifs::{build_graph, IfsSpec};
use nestwalk_core::network::{pairwise_resistance, CellRenormalizer};
use nestwalk_core::walk::{crossing_endpoints, simulate_vsrw, StopRule, WalkConfig, WalkMode, WalkRng};
use std::hint::black_box;

fn bench_build(c: &mut Criterion) {
    let spec = IfsSpec::sierpinski_gasket();
    let mut group = c.benchmark_group("build_graph");
    for n in [3, 5, 7] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| b.iter(|| build_graph(&spec, n).unwrap()));
    }
    group.finish();
}

fn pareto_field(n: usize, seed: u64) -> (nestwalk_core::FractalGraph, nestwalk_core::ConductanceField) {
    let graph = build_graph(&IfsSpec::sierpinski_gasket(), n).unwrap();
    let law = ConductanceLaw::pareto(0.5, 1.0).unwrap();
    let field = sample_environment(&graph, &law, &SeededStream::new(seed, 0, StreamPurpose::Environment)).unwrap();
    (graph, field)
}

fn bench_resistance(c: &mut Criterion) {
    let mut group = c.benchmark_group("pairwise_resistance_v0");
    for n in [3, 5] {
        let (graph, field) = pareto_field(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| pairwise_resistance(&field, black_box(graph.boundary())).unwrap())
        });
    }
    group.finish();
}

fn bench_coarsen(c: &mut Criterion) {
    let ren = CellRenormalizer::new(&IfsSpec::sierpinski_gasket()).unwrap();
    let mut group = c.benchmark_group("coarsen_to_v0");
    for n in [3, 5, 7] {
        let (_, field) = pareto_field(n, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| ren.coarsen_to(black_box(field.weights()), n, 0).unwrap())
        });
    }
    group.finish();
}

fn bench_walk(c: &mut Criterion) {
    let mut group = c.benchmark_group("vsrw_crossing");
    for n in [3, 5] {
        let (graph, field) = pareto_field(n, 3);
        let (start, targets) = crossing_endpoints(&graph);
        let cfg = WalkConfig::new(WalkMode::Vsrw, start, StopRule::hit(targets));
        let mut trial = 0;
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                trial += 1;
                simulate_vsrw(&field, &cfg, &mut WalkRng::for_trial(0, trial)).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_build, bench_resistance, bench_coarsen, bench_walk);
criterion_main!(benches);
