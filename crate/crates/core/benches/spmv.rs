use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spmv_entropy::bench::input_vector;
use spmv_entropy::kernels::{spmv_coo_into, spmv_csr_into, ParallelCsr, WorkerMode};
use spmv_entropy::matio::{coo_to_csr, CooMatrix};

fn random_matrix(n: usize, per_row: usize, seed: u64) -> CooMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = std::collections::BTreeSet::new();
    for r in 0..n {
        while cells.range((r, 0)..(r + 1, 0)).count() < per_row {
            cells.insert((r, rng.gen_range(0..n)));
        }
    }
    let (rows, cols): (Vec<_>, Vec<_>) = cells.into_iter().unzip();
    let values = (0..rows.len()).map(|_| rng.gen::<f64>()).collect();
    CooMatrix::new(n, n, rows, cols, values).unwrap()
}

fn serial_vs_parallel(c: &mut Criterion) {
    let coo = random_matrix(20_000, 16, 7);
    let csr = coo_to_csr(&coo).unwrap();
    let x = input_vector(coo.n_cols(), 0);
    let mut y = vec![0.0; coo.n_rows()];

    let mut group = c.benchmark_group("spmv");
    group.bench_function("coo", |b| b.iter(|| spmv_coo_into(black_box(&coo), &x, &mut y).unwrap()));
    group.bench_function("csr_serial", |b| b.iter(|| spmv_csr_into(black_box(&csr), &x, &mut y).unwrap()));
    for p in [1, 2, 4, 8, 16] {
        for (mode, name) in [(WorkerMode::Pool, "csr_parallel_pool"), (WorkerMode::SpawnPerCall, "csr_parallel_spawn")] {
            let kernel = ParallelCsr::new(coo.n_rows(), p, mode).unwrap();
            group.bench_with_input(BenchmarkId::new(name, p), &p, |b, _| {
                b.iter(|| kernel.run(black_box(&csr), &x, &mut y).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, serial_vs_parallel);
criterion_main!(benches);
