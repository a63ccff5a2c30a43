use criterion::{criterion_group, criterion_main, Criterion};

use mamab_fl::harness::run_experiment;
use mamab_fl_bench::preset;

fn rounds(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulation");
    group.sample_size(20);
    let schedule_only = preset(100, false);
    group.bench_function("100 rounds, schedule only", |b| {
        b.iter(|| run_experiment(&schedule_only).unwrap())
    });
    let with_learning = preset(100, true);
    group.bench_function("100 rounds, with learning", |b| {
        b.iter(|| run_experiment(&with_learning).unwrap())
    });
    group.finish();
}

criterion_group!(benches, rounds);
criterion_main!(benches);
