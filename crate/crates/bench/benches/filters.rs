use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hgconv_bench::filter_case;
use hgconv_core::*;

fn chebyshev_vs_exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("filter");
    group.sample_size(10);
    for &n in &[128usize, 256, 512] {
        let case = filter_case(n, 0.02, 25, 7);
        group.bench_with_input(BenchmarkId::new("chebyshev", n), &case, |b, case| {
            b.iter(|| chebyshev_filter(&case.lap, &case.signal, &case.chebyshev).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("exact", n), &case, |b, case| {
            b.iter(|| exact_spectral_filter(&case.lap, &case.signal, &case.monomial).unwrap())
        });
    }
    group.finish();
}

fn chebyshev_edge_scaling(c: &mut Criterion) {
    let mut group = c.benchmark_group("chebyshev_edges");
    for &density in &[0.005, 0.01, 0.02, 0.04] {
        let case = filter_case(2000, density, 25, 11);
        group.bench_with_input(BenchmarkId::from_parameter(case.graph.n_edges()), &case, |b, case| {
            b.iter(|| chebyshev_filter(&case.lap, &case.signal, &case.chebyshev).unwrap())
        });
    }
    group.finish();
}

fn spmm(c: &mut Criterion) {
    let case = filter_case(2000, 0.01, 2, 3);
    let x = nalgebra::DMatrix::from_fn(2000, 32, |i, j| ((i * 31 + j) % 17) as f64 / 17.0);
    c.bench_function("spmm_2000x32", |b| b.iter(|| case.lap.matrix().mul_dense(&x)));
}

criterion_group!(benches, chebyshev_vs_exact, chebyshev_edge_scaling, spmm);
criterion_main!(benches);
