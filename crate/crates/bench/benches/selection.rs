use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use relaysim::model::{CityId, IspId};
use relaysim::selection::solver::{solve_exact, solve_greedy, BandwidthMatrix};
use relaysim::selection::{generate_relay_list, random_relay_list};
use relaysim::{Peer, PeerId, SelectionParams};

fn peers(n: usize, rng: &mut ChaCha8Rng) -> Vec<Peer> {
    (0..n)
        .map(|i| {
            let up = [512.0, 1024.0, 3072.0, 10240.0][rng.random_range(0..4)];
            Peer::new(
                PeerId(i as u32),
                CityId(rng.random_range(0..5)),
                IspId(rng.random_range(1..=3)),
                up,
                up * 4.0,
                rng.random_range(0.0..3600.0),
                1e6,
            )
        })
        .collect()
}

fn relay_lists(c: &mut Criterion) {
    let mut g = c.benchmark_group("relay_list");
    for n in [100, 1000, 5000] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let table = peers(n, &mut rng);
        let online: Vec<&Peer> = table.iter().collect();
        let params = SelectionParams::default();
        g.bench_with_input(BenchmarkId::new("path_aware", n), &n, |b, _| {
            b.iter(|| generate_relay_list(&table[0], black_box(&online), &params, 3600.0, &mut rng))
        });
        g.bench_with_input(BenchmarkId::new("random", n), &n, |b, _| {
            b.iter(|| random_relay_list(&table[0], black_box(&online), params.zeta, &mut rng))
        });
    }
    g.finish();
}

fn solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("solver");
    for dim in [4, 6] {
        let mut rng = ChaCha8Rng::seed_from_u64(dim as u64);
        let b = BandwidthMatrix::from_rows(
            (0..dim).map(|_| (0..dim).map(|_| rng.random_range(0..=10) as f64).collect()).collect(),
        )
        .unwrap();
        let caps = vec![20.0; dim];
        g.bench_with_input(BenchmarkId::new("exact", dim), &dim, |bch, _| {
            bch.iter(|| solve_exact(black_box(&b), &caps))
        });
        g.bench_with_input(BenchmarkId::new("greedy", dim), &dim, |bch, _| {
            bch.iter(|| solve_greedy(black_box(&b), &caps))
        });
    }
    g.finish();
}

criterion_group!(benches, relay_lists, solvers);
criterion_main!(benches);
