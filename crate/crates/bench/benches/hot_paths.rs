use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ff_forge_core::latent::point_set_distance;
use ff_forge_core::metrics::{auroc, fpr_at_95tpr};
use ff_forge_core::rng;
use ff_forge_core::{DistanceKind, FfNetwork, GoodnessKind, NetworkConfig, ScoreTable};
use rand::Rng;

fn random_image(seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, &[]);
    (0..784).map(|_| if r.random_bool(0.2) { r.random_range(0.3..1.0) } else { 0.0 }).collect()
}

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("class_goodness");
    group.sample_size(20);
    let image = random_image(1);
    for kind in [GoodnessKind::UnboundedSpiking, GoodnessKind::AnalogSquared] {
        let cfg = NetworkConfig {
            goodness: kind,
            layers: vec![200, 200],
            ..NetworkConfig::default()
        };
        let net = FfNetwork::new(&cfg, 784, 10, 0).unwrap();
        group.bench_function(BenchmarkId::from_parameter(format!("{kind:?}")), |b| {
            b.iter(|| net.class_goodness(black_box(&image), 3).unwrap())
        });
    }
    group.finish();
}

fn distance(c: &mut Criterion) {
    let mut r = rng::stream(2, &[]);
    let set: Vec<Vec<f64>> = (0..100).map(|_| (0..1400).map(|_| r.random_range(0.0..1.0)).collect()).collect();
    let point: Vec<f64> = (0..1400).map(|_| r.random_range(0.0..1.0)).collect();
    let mut group = c.benchmark_group("point_set_distance_1400x100");
    for kind in [DistanceKind::Manhattan, DistanceKind::Euclidean, DistanceKind::Cosine] {
        group.bench_function(BenchmarkId::from_parameter(format!("{kind:?}")), |b| {
            b.iter(|| point_set_distance(black_box(&point), &set, kind).unwrap())
        });
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let mut r = rng::stream(3, &[]);
    let id: Vec<f64> = (0..10_000).map(|_| r.random_range(0.0..1.0)).collect();
    let ood: Vec<f64> = (0..10_000).map(|_| r.random_range(0.2..1.2)).collect();
    let table = ScoreTable::new(id, ood).unwrap();
    c.bench_function("auroc_10k_vs_10k", |b| b.iter(|| auroc(black_box(&table))));
    c.bench_function("fpr95_10k_vs_10k", |b| b.iter(|| fpr_at_95tpr(black_box(&table))));
}

criterion_group!(benches, forward, distance, metrics);
criterion_main!(benches);
