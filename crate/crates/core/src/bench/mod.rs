//! Measurement protocol: each kernel runs 1000-5000 times per trial, each
//! experiment is repeated with fresh permutation seeds, and repeats are
//! summarized as min/max/mean GFLOPS and entropy.

mod summary;

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::{self, clamp_bins, EntropyBase, EntropyError};
use crate::kernels::{self, KernelError, ParallelCsr, WorkerMode};
use crate::matio::{coo_to_csr, CooMatrix, CsrMatrix, MatrixError};
use crate::permute::{self, permute_vector, PermutationError, StrategyConfig, StrategyKind};

pub use summary::{best_mark, render_text, summarize, BenchRecord, KernelStats, MetricStats, Summary};

pub const MIN_ITERATIONS: usize = 1000;
pub const MAX_ITERATIONS: usize = 5000;
pub const PILOT_CALLS: usize = 10;
/// Relative tolerance (infinity norm) for every correctness check.
pub const CORRECTNESS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("time per call must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error("no trials")]
    NoTrials,
    #[error("no records to mark")]
    NoRecords,
    #[error("trial log line {line}: {msg}")]
    Log { line: usize, msg: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Permutation(#[from] PermutationError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Kernel under test. Serialized as `cpu_coo`, `cpu_csr` or `cpu_par:<p>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelId {
    CpuCoo,
    CpuCsr,
    CpuParallel(usize),
}

impl KernelId {
    /// Row label in text tables.
    pub fn label(self) -> &'static str {
        match self {
            KernelId::CpuCoo => "CPU COO",
            KernelId::CpuCsr => "CPU CSR",
            KernelId::CpuParallel(_) => "CPU PAR",
        }
    }

    pub fn workers(self) -> Option<usize> {
        match self {
            KernelId::CpuParallel(p) => Some(p),
            _ => None,
        }
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelId::CpuCoo => f.write_str("cpu_coo"),
            KernelId::CpuCsr => f.write_str("cpu_csr"),
            KernelId::CpuParallel(p) => write!(f, "cpu_par:{p}"),
        }
    }
}

impl FromStr for KernelId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cpu_coo" => Ok(KernelId::CpuCoo),
            "cpu_csr" => Ok(KernelId::CpuCsr),
            _ => s
                .strip_prefix("cpu_par:")
                .and_then(|p| p.parse().ok())
                .filter(|&p| p >= 1)
                .map(KernelId::CpuParallel)
                .ok_or_else(|| format!("unknown kernel `{s}`")),
        }
    }
}

impl Serialize for KernelId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KernelId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One timed (matrix, strategy, kernel, repeat) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub matrix: String,
    pub strategy: StrategyKind,
    pub kernel: KernelId,
    pub repeat: usize,
    pub seed: u64,
    pub iterations: usize,
    pub seconds_per_call: f64,
    pub gflops: f64,
    pub entropy_bits: f64,
    pub correctness_ok: bool,
}

/// Writes trials as JSON Lines.
pub fn write_trials<W: Write>(trials: &[TrialResult], mut w: W) -> Result<(), BenchError> {
    for t in trials {
        serde_json::to_writer(&mut w, t).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a JSON Lines trial log; blank lines are skipped.
pub fn read_trials<R: BufRead>(r: R) -> Result<Vec<TrialResult>, BenchError> {
    let mut trials = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t = serde_json::from_str(&line).map_err(|e| BenchError::Log { line: i + 1, msg: e.to_string() })?;
        trials.push(t);
    }
    if trials.is_empty() {
        return Err(BenchError::NoTrials);
    }
    Ok(trials)
}

/// Both storage forms of the matrix a kernel runs on.
pub struct Problem {
    pub coo: CooMatrix,
    pub csr: CsrMatrix,
}

impl Problem {
    pub fn new(coo: CooMatrix) -> Result<Self, MatrixError> {
        let csr = coo_to_csr(&coo)?;
        Ok(Problem { coo, csr })
    }

    pub fn nnz(&self) -> usize {
        self.coo.nnz()
    }
}

pub trait SpmvKernel {
    fn id(&self) -> KernelId;
    fn run(&self, problem: &Problem, x: &[f64], y: &mut [f64]) -> Result<(), KernelError>;
}

pub struct CooKernel;

impl SpmvKernel for CooKernel {
    fn id(&self) -> KernelId {
        KernelId::CpuCoo
    }

    fn run(&self, problem: &Problem, x: &[f64], y: &mut [f64]) -> Result<(), KernelError> {
        kernels::spmv_coo_into(&problem.coo, x, y)
    }
}

pub struct CsrKernel;

impl SpmvKernel for CsrKernel {
    fn id(&self) -> KernelId {
        KernelId::CpuCsr
    }

    fn run(&self, problem: &Problem, x: &[f64], y: &mut [f64]) -> Result<(), KernelError> {
        kernels::spmv_csr_into(&problem.csr, x, y)
    }
}

impl SpmvKernel for ParallelCsr {
    fn id(&self) -> KernelId {
        KernelId::CpuParallel(self.workers())
    }

    fn run(&self, problem: &Problem, x: &[f64], y: &mut [f64]) -> Result<(), KernelError> {
        ParallelCsr::run(self, &problem.csr, x, y)
    }
}

/// Stand-in kernel that always errors, for exercising failure handling.
pub struct FailingKernel(pub KernelId);

impl SpmvKernel for FailingKernel {
    fn id(&self) -> KernelId {
        self.0
    }

    fn run(&self, _: &Problem, _: &[f64], _: &mut [f64]) -> Result<(), KernelError> {
        Err(KernelError::Failed(format!("{} is a failing stub", self.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSet {
    pub coo: bool,
    pub csr: bool,
    pub parallel: bool,
    /// Parallel kernels run for every p in `1..=max_workers` (capped at n_rows).
    pub max_workers: usize,
    pub worker_mode: WorkerMode,
}

impl Default for KernelSet {
    fn default() -> Self {
        KernelSet { coo: true, csr: true, parallel: true, max_workers: 16, worker_mode: WorkerMode::Pool }
    }
}

/// Instantiates the kernels in `set` for a matrix with `n_rows` rows.
pub fn standard_kernels(n_rows: usize, set: &KernelSet) -> Result<Vec<Box<dyn SpmvKernel>>, KernelError> {
    let mut out: Vec<Box<dyn SpmvKernel>> = Vec::new();
    if set.coo {
        out.push(Box::new(CooKernel));
    }
    if set.csr {
        out.push(Box::new(CsrKernel));
    }
    if set.parallel {
        for p in 1..=set.max_workers.min(n_rows) {
            out.push(Box::new(ParallelCsr::new(n_rows, p, set.worker_mode)?));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub repeats: usize,
    pub master_seed: u64,
    pub strategy: StrategyConfig,
    /// Requested 2D histogram resolution for the per-repeat entropy.
    pub bins_2d: (usize, usize),
    pub entropy_base: EntropyBase,
    /// Wall time each timed loop aims for before clamping the iteration count.
    pub target_seconds: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            repeats: 32,
            master_seed: 0,
            strategy: StrategyConfig::default(),
            bins_2d: (128, 128),
            entropy_base: EntropyBase::Bits,
            target_seconds: 2.0,
        }
    }
}

/// GFLOPS for one SpMV call: `2 nnz / seconds / 1e9`.
pub fn gflops(nnz: usize, seconds_per_call: f64) -> Result<f64, BenchError> {
    if !(seconds_per_call > 0.0 && seconds_per_call.is_finite()) {
        return Err(BenchError::InvalidDuration(seconds_per_call));
    }
    Ok(2.0 * nnz as f64 / (seconds_per_call * 1e9))
}

/// `round(target / estimate)` clamped to `[MIN_ITERATIONS, MAX_ITERATIONS]`.
pub fn choose_iterations(estimated_seconds_per_call: f64, target_seconds: f64) -> Result<usize, BenchError> {
    if !(estimated_seconds_per_call > 0.0 && estimated_seconds_per_call.is_finite()) {
        return Err(BenchError::InvalidDuration(estimated_seconds_per_call));
    }
    let raw = (target_seconds / estimated_seconds_per_call).round();
    Ok(raw.clamp(MIN_ITERATIONS as f64, MAX_ITERATIONS as f64) as usize)
}

pub struct Timing {
    pub seconds_per_call: f64,
    /// Output of the final call.
    pub output: Vec<f64>,
}

/// Times `iterations` back-to-back calls, first call included, and returns
/// the mean wall time per call.
pub fn time_kernel(
    kernel: &dyn SpmvKernel,
    problem: &Problem,
    x: &[f64],
    iterations: usize,
) -> Result<Timing, BenchError> {
    if iterations == 0 {
        return Err(BenchError::NoIterations);
    }
    let mut y = vec![0.0; problem.coo.n_rows()];
    let start = Instant::now();
    for _ in 0..iterations {
        kernel.run(problem, x, &mut y)?;
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok(Timing { seconds_per_call: elapsed / iterations as f64, output: y })
}

/// `max |a - b| / max |b|`; falls back to the absolute error when `b` is zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Deterministic input vector with entries in `[0, 1)`.
pub fn input_vector(n: usize, master_seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(1);
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

/// Benchmark state for one matrix: its kernels, input vector, unpermuted
/// reference output, and the iteration count fixed per kernel by the first
/// pilot run.
pub struct MatrixBench<'a> {
    name: String,
    matrix: &'a CooMatrix,
    kernels: Vec<Box<dyn SpmvKernel>>,
    config: &'a BenchConfig,
    x: Vec<f64>,
    reference: Vec<f64>,
    iterations: HashMap<KernelId, usize>,
}

impl<'a> MatrixBench<'a> {
    pub fn new(
        name: impl Into<String>,
        matrix: &'a CooMatrix,
        kernels: Vec<Box<dyn SpmvKernel>>,
        config: &'a BenchConfig,
    ) -> Result<Self, BenchError> {
        if config.repeats == 0 {
            return Err(BenchError::NoRepeats);
        }
        let x = input_vector(matrix.n_cols(), config.master_seed);
        let reference = kernels::spmv_csr(&coo_to_csr(matrix)?, &x)?;
        Ok(MatrixBench {
            name: name.into(),
            matrix,
            kernels,
            config,
            x,
            reference,
            iterations: HashMap::new(),
        })
    }

    fn failed(&self, strategy: StrategyKind, kernel: KernelId, repeat: usize, seed: u64, entropy: f64) -> TrialResult {
        TrialResult {
            matrix: self.name.clone(),
            strategy,
            kernel,
            repeat,
            seed,
            iterations: 0,
            seconds_per_call: 0.0,
            gflops: 0.0,
            entropy_bits: entropy,
            correctness_ok: false,
        }
    }

    fn iterations_for(&mut self, kernel: usize, problem: &Problem, x: &[f64]) -> Result<usize, BenchError> {
        let id = self.kernels[kernel].id();
        if let Some(&n) = self.iterations.get(&id) {
            return Ok(n);
        }
        let pilot = time_kernel(self.kernels[kernel].as_ref(), problem, x, PILOT_CALLS)?;
        // Sub-resolution pilots are treated as 1 ns per call.
        let n = choose_iterations(pilot.seconds_per_call.max(1e-9), self.config.target_seconds)?;
        self.iterations.insert(id, n);
        Ok(n)
    }

    /// Runs every repeat of one strategy. Returns one trial per
    /// (repeat, kernel), in that order.
    pub fn run_experiment(&mut self, strategy: StrategyKind) -> Result<Vec<TrialResult>, BenchError> {
        let seeds = permute::derive_seeds(self.config.master_seed, self.config.repeats);
        let mut trials = Vec::with_capacity(seeds.len() * self.kernels.len());
        for (repeat, &seed) in seeds.iter().enumerate() {
            let plan = permute::build_strategy(self.matrix, strategy, seed, &self.config.strategy)?;
            let problem = Problem::new(plan.apply(self.matrix)?)?;
            let h = entropy::histogram_2d(
                &problem.coo,
                clamp_bins(self.config.bins_2d.0, problem.coo.n_rows()),
                clamp_bins(self.config.bins_2d.1, problem.coo.n_cols()),
            )?;
            let entropy = match entropy::shannon_entropy(&h) {
                Ok(bits) => self.config.entropy_base.from_bits(bits),
                Err(EntropyError::EmptyHistogram) => 0.0,
                Err(e) => return Err(e.into()),
            };
            let x = permute_vector(&self.x, &plan.cols)?;
            let back_rows = plan.rows.inverse();
            let unpermute = |y: &[f64]| permute_vector(y, &back_rows);

            // Permutation identity check against the unpermuted reference.
            let y = kernels::spmv_csr(&problem.csr, &x)?;
            if relative_error(&unpermute(&y)?, &self.reference) > CORRECTNESS_TOLERANCE {
                for k in &self.kernels {
                    trials.push(self.failed(strategy, k.id(), repeat, seed, entropy));
                }
                continue;
            }

            for k in 0..self.kernels.len() {
                let id = self.kernels[k].id();
                let timed = self.iterations_for(k, &problem, &x).and_then(|iters| {
                    let t = time_kernel(self.kernels[k].as_ref(), &problem, &x, iters)?;
                    Ok((iters, t))
                });
                let trial = match timed {
                    Ok((iterations, t)) => {
                        let ok = relative_error(&unpermute(&t.output)?, &self.reference) <= CORRECTNESS_TOLERANCE;
                        let rate = if ok { gflops(problem.nnz(), t.seconds_per_call.max(f64::MIN_POSITIVE))? } else { 0.0 };
                        TrialResult {
                            matrix: self.name.clone(),
                            strategy,
                            kernel: id,
                            repeat,
                            seed,
                            iterations,
                            seconds_per_call: t.seconds_per_call,
                            gflops: rate,
                            entropy_bits: entropy,
                            correctness_ok: ok,
                        }
                    }
                    Err(BenchError::Kernel(_)) => self.failed(strategy, id, repeat, seed, entropy),
                    Err(e) => return Err(e),
                };
                trials.push(trial);
            }
        }
        Ok(trials)
    }
}

/// Runs one strategy on one matrix and summarizes it.
pub fn run_experiment(
    name: &str,
    m: &CooMatrix,
    strategy: StrategyKind,
    kernels: Vec<Box<dyn SpmvKernel>>,
    config: &BenchConfig,
) -> Result<(Vec<TrialResult>, BenchRecord), BenchError> {
    let trials = MatrixBench::new(name, m, kernels, config)?.run_experiment(strategy)?;
    let mut summary = summarize(&trials)?;
    let record = summary.records.remove(0);
    Ok((trials, record))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gflops_arithmetic() {
        assert_eq!(gflops(1_000_000, 1e-3).unwrap(), 2.0);
        assert_eq!(gflops(0, 1e-3).unwrap(), 0.0);
        assert_eq!(gflops(500_000, 5e-4).unwrap(), 2.0);
        assert!(gflops(10, 0.0).is_err());
        assert!(gflops(10, -1.0).is_err());
    }

    #[test]
    fn iteration_clamping() {
        assert_eq!(choose_iterations(1e-3, 2.0).unwrap(), 2000);
        assert_eq!(choose_iterations(1e-2, 2.0).unwrap(), 1000);
        assert_eq!(choose_iterations(1e-4, 2.0).unwrap(), 5000);
        assert!(choose_iterations(0.0, 2.0).is_err());
    }

    #[test]
    fn kernel_ids_round_trip() {
        for id in [KernelId::CpuCoo, KernelId::CpuCsr, KernelId::CpuParallel(12)] {
            assert_eq!(id.to_string().parse::<KernelId>().unwrap(), id);
        }
        assert!("cpu_par:0".parse::<KernelId>().is_err());
        assert!("gpu".parse::<KernelId>().is_err());
    }

    #[test]
    fn single_iteration_timing() {
        let problem = Problem::new(CooMatrix::identity(3).unwrap()).unwrap();
        let t = time_kernel(&CsrKernel, &problem, &[1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(t.output, vec![1.0, 2.0, 3.0]);
        assert!(t.seconds_per_call >= 0.0);
        assert!(time_kernel(&CsrKernel, &problem, &[1.0; 3], 0).is_err());
        assert!(time_kernel(&FailingKernel(KernelId::CpuCsr), &problem, &[1.0; 3], 5).is_err());
    }

    #[test]
    fn failing_kernel_yields_zero_rate_trials() {
        let m = CooMatrix::identity(8).unwrap();
        let config = BenchConfig { repeats: 3, target_seconds: 1e-6, ..BenchConfig::default() };
        let kernels: Vec<Box<dyn SpmvKernel>> = vec![Box::new(CsrKernel), Box::new(FailingKernel(KernelId::CpuCoo))];
        let (trials, record) = run_experiment("id8", &m, StrategyKind::RowPermute, kernels, &config).unwrap();
        assert_eq!(trials.len(), 6);
        let failed: Vec<_> = trials.iter().filter(|t| t.kernel == KernelId::CpuCoo).collect();
        assert!(failed.iter().all(|t| t.gflops == 0.0 && !t.correctness_ok));
        let coo = record.kernel(KernelId::CpuCoo).unwrap();
        assert_eq!((coo.stats.min, coo.stats.max, coo.stats.mean), (0.0, 0.0, 0.0));
        assert_eq!(coo.failed, 3);
        assert!(trials.iter().filter(|t| t.kernel == KernelId::CpuCsr).all(|t| t.correctness_ok));
    }

    #[test]
    fn trial_log_round_trip() {
        let t = TrialResult {
            matrix: "a.mtx".into(),
            strategy: StrategyKind::ColumnGradient,
            kernel: KernelId::CpuParallel(4),
            repeat: 3,
            seed: u64::MAX,
            iterations: 1000,
            seconds_per_call: 1.234e-7,
            gflops: 0.1 + 0.2,
            entropy_bits: 10.5,
            correctness_ok: true,
        };
        let mut buf = Vec::new();
        write_trials(std::slice::from_ref(&t), &mut buf).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert!(line.contains("\"kernel\":\"cpu_par:4\""));
        assert_eq!(read_trials(buf.as_slice()).unwrap(), vec![t]);
        assert!(matches!(read_trials("".as_bytes()), Err(BenchError::NoTrials)));
        assert!(matches!(read_trials("{}\n".as_bytes()), Err(BenchError::Log { line: 1, .. })));
    }
}
