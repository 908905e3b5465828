use criterion::{criterion_group, criterion_main, Criterion};
use hgconv_bench::{batch, training_case};
use hgconv_core::*;
use rand_chacha::rand_core::SeedableRng;

fn forward_backward(c: &mut Criterion) {
    let (ds, g) = training_case(20);
    let cfg = NetworkConfig {
        k: 10,
        conv_channels: [8, 16, 32],
        fc_width: 32,
        ..Default::default()
    };
    let model = init_model(&cfg, build_hierarchy(&g, 3, 0).unwrap()).unwrap();
    let x = batch(&ds, 32);
    let labels: Vec<usize> = ds.labels()[..32].to_vec();
    c.bench_function("forward_32", |b| b.iter(|| model.forward(&x).unwrap()));
    c.bench_function("forward_backward_32", |b| {
        b.iter(|| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
            let (_, cache) = model.forward_train(&x, &mut rng).unwrap();
            model.backward(&cache, &labels).unwrap()
        })
    });
}

fn coarsening(c: &mut Criterion) {
    let (_, g) = training_case(50);
    c.bench_function("build_hierarchy_120", |b| b.iter(|| build_hierarchy(&g, 3, 0).unwrap()));
}

criterion_group!(benches, forward_backward, coarsening);
criterion_main!(benches);
