//! SpMV kernels: COO, serial CSR, and row-partitioned parallel CSR.
//!
//! Every kernel accumulates each output entry in storage order. The parallel
//! kernel gives each worker a disjoint range of output rows, so its result is
//! bitwise identical to the serial CSR kernel for any worker count.

use std::ops::Range;

use thiserror::Error;

use crate::matio::{CooMatrix, CsrMatrix};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("{what} has length {found}, expected {expected}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("worker count {workers} must lie in 1..={n_rows}")]
    InvalidWorkers { workers: usize, n_rows: usize },
    #[error("kernel failed: {0}")]
    Failed(String),
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), KernelError> {
    if expected == found {
        Ok(())
    } else {
        Err(KernelError::DimensionMismatch { what, expected, found })
    }
}

/// Even split of `n_rows` rows over `p` workers. Boundaries have `p + 1`
/// entries; the first `n_rows % p` parts get one extra row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowPartition {
    boundaries: Vec<usize>,
}

impl RowPartition {
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn workers(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.boundaries.windows(2).map(|w| w[0]..w[1])
    }
}

/// Naive row partition without looking at nonzero counts.
pub fn make_row_partition(n_rows: usize, p: usize) -> Result<RowPartition, KernelError> {
    if p == 0 || p > n_rows {
        return Err(KernelError::InvalidWorkers { workers: p, n_rows });
    }
    let base = n_rows / p;
    let extra = n_rows % p;
    let mut boundaries = Vec::with_capacity(p + 1);
    boundaries.push(0);
    let mut acc = 0;
    for part in 0..p {
        acc += base + usize::from(part < extra);
        boundaries.push(acc);
    }
    Ok(RowPartition { boundaries })
}

#[inline]
fn csr_rows(m: &CsrMatrix, x: &[f64], rows: Range<usize>, out: &mut [f64]) {
    let row_ptr = m.row_ptr();
    let cols = m.col_indices();
    let vals = m.values();
    for (i, yi) in rows.zip(out.iter_mut()) {
        let mut acc = 0.0;
        for k in row_ptr[i]..row_ptr[i + 1] {
            acc += vals[k] * x[cols[k]];
        }
        *yi = acc;
    }
}

/// `y = m * x` in CSR, written into `y`.
pub fn spmv_csr_into(m: &CsrMatrix, x: &[f64], y: &mut [f64]) -> Result<(), KernelError> {
    check_len("input vector", m.n_cols(), x.len())?;
    check_len("output vector", m.n_rows(), y.len())?;
    csr_rows(m, x, 0..m.n_rows(), y);
    Ok(())
}

pub fn spmv_csr(m: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>, KernelError> {
    let mut y = vec![0.0; m.n_rows()];
    spmv_csr_into(m, x, &mut y)?;
    Ok(y)
}

/// `y = m * x` over triplets in stored order.
pub fn spmv_coo_into(m: &CooMatrix, x: &[f64], y: &mut [f64]) -> Result<(), KernelError> {
    check_len("input vector", m.n_cols(), x.len())?;
    check_len("output vector", m.n_rows(), y.len())?;
    y.fill(0.0);
    for (r, c, v) in m.triplets() {
        y[r] += v * x[c];
    }
    Ok(())
}

pub fn spmv_coo(m: &CooMatrix, x: &[f64]) -> Result<Vec<f64>, KernelError> {
    let mut y = vec![0.0; m.n_rows()];
    spmv_coo_into(m, x, &mut y)?;
    Ok(y)
}

/// Cuts `y` into the disjoint slices owned by each partition range.
fn split_output<'a>(partition: &RowPartition, mut y: &'a mut [f64]) -> Vec<(Range<usize>, &'a mut [f64])> {
    let mut parts = Vec::with_capacity(partition.workers());
    for rows in partition.ranges() {
        let (head, tail) = std::mem::take(&mut y).split_at_mut(rows.len());
        parts.push((rows, head));
        y = tail;
    }
    parts
}

/// How the parallel kernel obtains its workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerMode {
    /// Reuse a pool built once with one thread per partition.
    #[default]
    Pool,
    /// Spawn fresh OS threads on every call.
    SpawnPerCall,
}

/// Parallel CSR kernel bound to a fixed row partition.
pub struct ParallelCsr {
    partition: RowPartition,
    mode: WorkerMode,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl ParallelCsr {
    pub fn new(n_rows: usize, workers: usize, mode: WorkerMode) -> Result<Self, KernelError> {
        let partition = make_row_partition(n_rows, workers)?;
        #[cfg(feature = "parallel")]
        let pool = match mode {
            WorkerMode::Pool => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| KernelError::Failed(e.to_string()))?,
            ),
            WorkerMode::SpawnPerCall => None,
        };
        Ok(ParallelCsr {
            partition,
            mode,
            #[cfg(feature = "parallel")]
            pool,
        })
    }

    pub fn workers(&self) -> usize {
        self.partition.workers()
    }

    pub fn partition(&self) -> &RowPartition {
        &self.partition
    }

    pub fn run(&self, m: &CsrMatrix, x: &[f64], y: &mut [f64]) -> Result<(), KernelError> {
        check_len("input vector", m.n_cols(), x.len())?;
        check_len("output vector", m.n_rows(), y.len())?;
        let last = *self.partition.boundaries.last().unwrap_or(&0);
        check_len("partitioned rows", m.n_rows(), last)?;
        let parts = split_output(&self.partition, y);
        match self.mode {
            WorkerMode::Pool => run_pooled(self, m, x, parts),
            WorkerMode::SpawnPerCall => std::thread::scope(|s| {
                for (rows, out) in parts {
                    s.spawn(move || csr_rows(m, x, rows, out));
                }
            }),
        }
        Ok(())
    }
}

#[cfg(feature = "parallel")]
fn run_pooled(kernel: &ParallelCsr, m: &CsrMatrix, x: &[f64], parts: Vec<(Range<usize>, &mut [f64])>) {
    use rayon::prelude::*;
    let work = || parts.into_par_iter().for_each(|(rows, out)| csr_rows(m, x, rows, out));
    match &kernel.pool {
        Some(pool) => pool.install(work),
        None => work(),
    }
}

// Sequential fallback: same partition, same per-row loop, one thread.
#[cfg(not(feature = "parallel"))]
fn run_pooled(_kernel: &ParallelCsr, m: &CsrMatrix, x: &[f64], parts: Vec<(Range<usize>, &mut [f64])>) {
    for (rows, out) in parts {
        csr_rows(m, x, rows, out);
    }
}

/// Row-partitioned CSR SpMV over `p` workers on the global pool.
pub fn spmv_csr_parallel(m: &CsrMatrix, x: &[f64], p: usize) -> Result<Vec<f64>, KernelError> {
    check_len("input vector", m.n_cols(), x.len())?;
    let partition = make_row_partition(m.n_rows(), p)?;
    let kernel = ParallelCsr {
        partition,
        mode: WorkerMode::Pool,
        #[cfg(feature = "parallel")]
        pool: None,
    };
    let mut y = vec![0.0; m.n_rows()];
    kernel.run(m, x, &mut y)?;
    Ok(y)
}
