use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use relaysim::{run, SimConfig, Strategy};

fn desk_runs(c: &mut Criterion) {
    let mut g = c.benchmark_group("run");
    g.sample_size(20);
    for strategy in Strategy::ALL {
        let cfg = SimConfig { peer_count: 500, content_size_kb: 16000.0, ..SimConfig::default() };
        g.bench_with_input(BenchmarkId::new("desk_500", strategy), &strategy, |b, &s| {
            b.iter(|| run(black_box(&cfg), s))
        });
    }
    let full = SimConfig::default();
    g.bench_function("full_5000_path_aware", |b| b.iter(|| run(black_box(&full), Strategy::PathAware)));
    g.finish();
}

criterion_group!(benches, desk_runs);
criterion_main!(benches);
