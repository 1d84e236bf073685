use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use gyroegg_core::batch::{run_batch, run_batch_sequential, seed_sweep};
use gyroegg_core::harness::ScenarioConfig;

const SCENARIO: &str = r#"
duration_s = 0.2
dt_s = 1e-4
seed = 0
[[commands]]
t_s = 0.0
forward = 1.0
"#;

fn sweep(c: &mut Criterion) {
    let config = ScenarioConfig::from_toml(SCENARIO).unwrap();
    let seeds: Vec<u64> = (1..=8).collect();
    let scenarios = seed_sweep(&config, &seeds).unwrap();

    let mut group = c.benchmark_group("seed_sweep_8");
    group.sample_size(10);
    group.bench_function("rayon", |b| b.iter(|| run_batch(black_box(&scenarios))));
    group.bench_function("sequential", |b| b.iter(|| run_batch_sequential(black_box(&scenarios))));
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
