//! Parallel-versus-sequential comparison for the data-parallel cores:
//! the exhaustive placement scan, batched swarm solves, and batched
//! scenario runs. Run with the default `parallel` feature to measure
//! the rayon paths against their always-available sequential twins.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use edgecare_core::config::ScenarioConfig;
use edgecare_core::exec;
use edgecare_core::offload::{
    solve_exhaustive, solve_exhaustive_seq, solve_pso, solve_pso_many, synth, PsoConfig,
};
use edgecare_core::sim::run_scenario;

fn bench_exhaustive_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("exhaustive_scan");
    for n in [12usize, 16, 18] {
        let instance = synth::random_instance(7, n);
        group.bench_with_input(BenchmarkId::new("parallel", n), &instance, |b, inst| {
            b.iter(|| solve_exhaustive(inst).unwrap());
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &instance, |b, inst| {
            b.iter(|| solve_exhaustive_seq(inst).unwrap());
        });
    }
    group.finish();
}

fn bench_swarm_batch(c: &mut Criterion) {
    let instances: Vec<_> = (0..64).map(|s| synth::random_instance(s, 10)).collect();
    let cfg = PsoConfig::default();
    let mut group = c.benchmark_group("swarm_batch_64x10");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| solve_pso_many(&instances, &cfg));
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            instances
                .iter()
                .enumerate()
                .map(|(i, inst)| solve_pso(inst, &cfg.clone().with_seed(i as u64)))
                .collect::<Vec<_>>()
        });
    });
    group.finish();
}

fn bench_scenario_batch(c: &mut Criterion) {
    let mut cfg = ScenarioConfig::default();
    cfg.workload.record_size_bytes = (50_000, 50_000);
    cfg.workload.requests = 6;
    let seeds: Vec<u64> = (0..8).collect();
    let mut group = c.benchmark_group("scenario_batch_8_seeds");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| exec::ordered_map(&seeds, |seed| run_scenario(&cfg, *seed).unwrap()));
    });
    group.bench_function("sequential", |b| {
        b.iter(|| exec::ordered_map_seq(&seeds, |seed| run_scenario(&cfg, *seed).unwrap()));
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_exhaustive_scan,
    bench_swarm_batch,
    bench_scenario_batch
);
criterion_main!(benches);
