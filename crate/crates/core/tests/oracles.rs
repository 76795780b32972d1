//! Kernels, permutations and histograms checked against independent
//! brute-force oracles.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spmv_entropy::bench::relative_error;
use spmv_entropy::entropy::{histogram_2d, row_histogram, shannon_entropy};
use spmv_entropy::kernels::{spmv_coo, spmv_csr, spmv_csr_parallel};
use spmv_entropy::matio::{coo_to_csr, CooMatrix};
use spmv_entropy::permute::{
    build_strategy, gradient_pivot, permute_cols, permute_rows, random_permutation, Permutation, StrategyConfig,
    StrategyKind,
};

fn random_matrix(rng: &mut ChaCha8Rng, n_rows: usize, n_cols: usize, density: f64) -> CooMatrix {
    let (mut r, mut c, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n_rows {
        for j in 0..n_cols {
            if rng.gen_bool(density) {
                r.push(i);
                c.push(j);
                v.push(rng.gen_range(-1.0..1.0));
            }
        }
    }
    CooMatrix::new(n_rows, n_cols, r, c, v).unwrap()
}

fn dense_oracle(m: &CooMatrix, x: &[f64]) -> Vec<f64> {
    let mut dense = vec![vec![0.0; m.n_cols()]; m.n_rows()];
    for (i, j, v) in m.triplets() {
        dense[i][j] = v;
    }
    dense.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

#[test]
fn csr_matches_dense_oracle_on_half_dense_8x8() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = random_matrix(&mut rng, 8, 8, 0.5);
    let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let y = spmv_csr(&coo_to_csr(&m).unwrap(), &x).unwrap();
    assert!(relative_error(&y, &dense_oracle(&m, &x)) <= 1e-14);
}

#[test]
fn coo_storage_order_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let m = random_matrix(&mut rng, 30, 20, 0.3);
    // Reverse storage order.
    let rev: Vec<_> = m.triplets().collect::<Vec<_>>().into_iter().rev().collect();
    let shuffled = CooMatrix::new(
        30,
        20,
        rev.iter().map(|t| t.0).collect(),
        rev.iter().map(|t| t.1).collect(),
        rev.iter().map(|t| t.2).collect(),
    )
    .unwrap();
    let x: Vec<f64> = (0..20).map(|_| rng.gen::<f64>()).collect();
    let y_csr = spmv_csr(&coo_to_csr(&m).unwrap(), &x).unwrap();
    assert!(relative_error(&spmv_coo(&shuffled, &x).unwrap(), &y_csr) <= 1e-14);
}

#[test]
fn parallel_on_100x100_is_bitwise_serial() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let m = coo_to_csr(&random_matrix(&mut rng, 100, 100, 0.1)).unwrap();
    let x: Vec<f64> = (0..100).map(|_| rng.gen::<f64>()).collect();
    let serial = spmv_csr(&m, &x).unwrap();
    for p in [1, 4, 100] {
        let par = spmv_csr_parallel(&m, &x, p).unwrap();
        assert!(par.iter().zip(&serial).all(|(a, b)| a.to_bits() == b.to_bits()), "p = {p}");
    }
}

#[test]
fn random_permutations_are_uniform_for_n4() {
    let draws = 10_000;
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for seed in 0..draws {
        *counts.entry(random_permutation(4, seed).unwrap().forward().to_vec()).or_default() += 1;
    }
    assert_eq!(counts.len(), 24);
    let p = 1.0 / 24.0;
    let expected = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    let mut chi2 = 0.0;
    for &c in counts.values() {
        assert!((c as f64 - expected).abs() <= 3.0 * sigma, "count {c} vs {expected}");
        chi2 += (c as f64 - expected).powi(2) / expected;
    }
    // 23 degrees of freedom, 0.1% critical value.
    assert!(chi2 < 49.73, "chi-square {chi2}");
}

fn recount(indices: &[usize], n: usize) -> Vec<usize> {
    let mut c = vec![0; n];
    for &i in indices {
        c[i] += 1;
    }
    c
}

#[test]
fn row_and_column_counts_move_with_the_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = random_matrix(&mut rng, 40, 25, 0.2);
    let pr = random_permutation(40, 1).unwrap();
    let pc = random_permutation(25, 2).unwrap();
    let rows = permute_rows(&m, &pr).unwrap();
    let cols = permute_cols(&m, &pc).unwrap();
    let before_r = recount(m.row_indices(), 40);
    let after_r = recount(rows.row_indices(), 40);
    for i in 0..40 {
        assert_eq!(after_r[pr.forward()[i]], before_r[i]);
    }
    let before_c = recount(m.col_indices(), 25);
    let after_c = recount(cols.col_indices(), 25);
    for j in 0..25 {
        assert_eq!(after_c[pc.forward()[j]], before_c[j]);
    }
}

#[test]
fn histogram_2d_total_is_nnz() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let (r, c) = (rng.gen_range(1..60), rng.gen_range(1..60));
        let m = random_matrix(&mut rng, r, c, 0.2);
        let (br, bc) = (rng.gen_range(1..=r), rng.gen_range(1..=c));
        let h = histogram_2d(&m, br, bc).unwrap();
        // Recount by brute force, cell by cell.
        let (wr, wc) = (r / br, c / bc);
        let mut expected = vec![0u64; br * bc];
        for (i, j, _) in m.triplets() {
            expected[(i / wr).min(br - 1) * bc + (j / wc).min(bc - 1)] += 1;
        }
        assert_eq!(h.counts(), expected.as_slice());
        assert_eq!(h.total(), m.nnz() as u64);
    }
}

/// Rows 0..step are sparse (one nonzero), rows step..n are dense.
fn step_matrix(n: usize, step: usize) -> CooMatrix {
    let (mut r, mut c) = (Vec::new(), Vec::new());
    for i in 0..n {
        let width = if i < step { 1 } else { 20 };
        for j in 0..width {
            r.push(i);
            c.push((i * 7 + j * 3) % n);
        }
    }
    let mut seen = std::collections::HashSet::new();
    let (r, c): (Vec<_>, Vec<_>) = r.into_iter().zip(c).filter(|p| seen.insert(*p)).unzip();
    let v = vec![1.0; r.len()];
    CooMatrix::new(n, n, r, c, v).unwrap()
}

#[test]
fn column_gradient_row_pivot_finds_density_step() {
    let m = step_matrix(400, 240);
    let cfg = StrategyConfig { bins: 40, ..StrategyConfig::default() };
    let h = row_histogram(&m, 40).unwrap();
    assert_eq!(gradient_pivot(&h).unwrap(), 240);
    let plan = build_strategy(&m, StrategyKind::ColumnGradient, 17, &cfg).unwrap();
    assert_eq!(plan.row_pivot, Some(240));
    assert!(plan.rows.is_bijection() && plan.cols.is_bijection());
}

#[test]
fn gradient_shuffle_raises_row_entropy_of_step_matrix() {
    let m = step_matrix(400, 200);
    let cfg = StrategyConfig { bins: 40, ..StrategyConfig::default() };
    let before = shannon_entropy(&row_histogram(&m, 40).unwrap()).unwrap();
    let plan = build_strategy(&m, StrategyKind::RowGradient, 3, &cfg).unwrap();
    let after = shannon_entropy(&row_histogram(&plan.apply(&m).unwrap(), 40).unwrap()).unwrap();
    assert!(after > before, "{after} <= {before}");
}

#[test]
fn identity_permutation_is_neutral() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = random_matrix(&mut rng, 10, 12, 0.3);
    let same = permute_cols(&permute_rows(&m, &Permutation::identity(10)).unwrap(), &Permutation::identity(12)).unwrap();
    assert_eq!(same, m);
}
