//! Sequential (one-thread pool) against the default rayon pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use toucan::synth::{gen_low_tubal_rank, gen_masks};
use toucan::tensor::fft3;
use toucan::toucan::complete_with_basis;
use toucan::tsvd::tsvd;
use toucan::{CgdConfig, FsmEstimate, MaskKind};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let seq = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let par = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("sequential", seq), ("parallel", par)]
}

fn bench(c: &mut Criterion) {
    let x = gen_low_tubal_rank(60, 120, 16, 4, 1).unwrap();
    let masks = gen_masks(60, 120, 16, MaskKind::Entries, 0.5, 2).unwrap();
    let u = FsmEstimate::from_tensor(&tsvd(&x).unwrap().truncate(4).unwrap().u);
    let cfg = CgdConfig::default();
    let mut g = c.benchmark_group("parallel");
    g.sample_size(20);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("fft3", name), |b| pool.install(|| b.iter(|| fft3(black_box(&x)))));
        g.bench_function(BenchmarkId::new("tsvd", name), |b| pool.install(|| b.iter(|| tsvd(black_box(&x)).unwrap())));
        g.bench_function(BenchmarkId::new("complete_with_basis", name), |b| {
            pool.install(|| b.iter(|| complete_with_basis(&u, black_box(&x), &masks, &cfg).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
