use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use spmv_entropy::entropy::EntropyBase;
use spmv_entropy::matio::CooMatrix;
use spmv_entropy::permute::{
    derive_seeds, permuted_entropy_sweep, permuted_entropy_sweep_sequential, StrategyConfig, StrategyKind,
};

// Dense 200x200 block in the corner of a 2000x2000 matrix.
fn clustered() -> CooMatrix {
    let (rows, cols): (Vec<_>, Vec<_>) = (0..200 * 200).map(|k| (k / 200, k % 200)).unzip();
    let n = rows.len();
    CooMatrix::new(2000, 2000, rows, cols, vec![1.0; n]).unwrap()
}

fn sweep(c: &mut Criterion) {
    let m = clustered();
    let seeds = derive_seeds(0, 32);
    let cfg = StrategyConfig::default();
    let mut group = c.benchmark_group("entropy_sweep_32");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| {
            permuted_entropy_sweep_sequential(black_box(&m), StrategyKind::RowColumnPermute, &seeds, &cfg, (128, 128), EntropyBase::Bits)
                .unwrap()
        })
    });
    group.bench_function("parallel", |b| {
        b.iter(|| {
            permuted_entropy_sweep(black_box(&m), StrategyKind::RowColumnPermute, &seeds, &cfg, (128, 128), EntropyBase::Bits)
                .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
