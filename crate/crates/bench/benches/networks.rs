use std::hint::black_box;

use blochmps::models::ising_model;
use blochmps::mps::network::compute_network_set;
use blochmps::mps::tensor::SiteTensor;
use blochmps::mps::transfer::normalize_dominant;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const N_SITES: usize = 12;

fn networks(c: &mut Criterion) {
    let model = ising_model(1.0);
    let mut group = c.benchmark_group("network_set_n12");
    group.sample_size(10);
    for bond in [2, 4, 8] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, _) = normalize_dominant(&SiteTensor::random(2, bond, &mut rng)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(bond), &a, |b, a| {
            b.iter(|| compute_network_set(black_box(a), &model.h01, None, N_SITES, true, None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, networks);
criterion_main!(benches);
