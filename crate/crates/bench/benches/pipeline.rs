use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dpw_core::factorization::{birkhoff, iwasawa};
use dpw_core::frame::{dpw_point, IntegrationOptions};
use dpw_core::homogeneous::cylinder_potential;
use dpw_core::loops::random_group_loop;
use dpw_core::potentials::parse_potential;
use dpw_core::wu::{homogeneous_mc_data, wu_from_samples, DiscNodes, DEFAULT_MODES, DEFAULT_TERMS};
use dpw_core::C64;

const S6: &str = include_str!("../../../potentials/s6.pot");

fn factorization(c: &mut Criterion) {
    let mut group = c.benchmark_group("factorization");
    for n in [1usize, 3] {
        let g = random_group_loop(n, 0.5, 8, &mut ChaCha8Rng::seed_from_u64(7));
        group.bench_with_input(BenchmarkId::new("birkhoff", n), &g, |b, g| b.iter(|| birkhoff(g).unwrap()));
        group.bench_with_input(BenchmarkId::new("iwasawa", n), &g, |b, g| b.iter(|| iwasawa(g).unwrap()));
    }
    group.finish();
}

fn construct_point(c: &mut Criterion) {
    let p = parse_potential(S6).unwrap();
    let opts = IntegrationOptions::default();
    c.bench_function("construct_point_s6", |b| {
        b.iter(|| dpw_point(&p, C64::new(0.6, -0.4), &opts).unwrap())
    });
}

fn wu_fit(c: &mut Criterion) {
    let p = cylinder_potential(0.6, 0.8).unwrap();
    let data = homogeneous_mc_data(&p, DiscNodes::standard(C64::new(0.0, 0.0), 0.5), 1e-2).unwrap();
    let mut group = c.benchmark_group("wu");
    group.sample_size(10);
    group.bench_function("fit_cylinder", |b| {
        b.iter(|| wu_from_samples(&data, DEFAULT_MODES, DEFAULT_TERMS, DEFAULT_MODES).unwrap())
    });
    group.finish();
}

criterion_group!(benches, factorization, construct_point, wu_fit);
criterion_main!(benches);
