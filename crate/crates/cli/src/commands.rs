use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use spmv_entropy::bench::{
    self, render_text, standard_kernels, summarize, FailingKernel, KernelId, MatrixBench, SpmvKernel, TrialResult,
};
use spmv_entropy::entropy::{self, clamp_bins, EntropySummary};
use spmv_entropy::matio::{parse_matrix_market, write_matrix_market};
use spmv_entropy::permute::{build_strategy, GENERATOR};
use spmv_entropy::{CooMatrix, EntropyBase, StrategyKind};

use crate::config::{HostInfo, RunConfig};

/// SuiteSparse matrices that appear in the published result tables.
pub const REFERENCE_MATRICES: &[&str] = &[
    "mult_dcop_01",
    "mult_dcop_02",
    "mult_dcop_03",
    "lp_fit2d",
    "bloweya",
    "lp_osa_07",
    "ex19",
    "brainpc2",
    "shermanACb",
    "cvxqp3",
    "case9",
    "TSOPF_FS_b9_c6",
    "OPF_6000",
    "OPF_3754",
    "c-47",
    "mhd4800a",
    "gen4",
    "Maragal_6",
    "aft01",
    "TSOPF_RS_b39_c7",
];

pub fn load_matrix(path: &Path) -> Result<CooMatrix> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_matrix_market(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn matrix_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn matrix_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "matrix".into())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

#[derive(Serialize)]
struct RunDocument<'a, T: Serialize> {
    tool_version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    host: HostInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    generator: Option<&'static str>,
    failures: Vec<MatrixFailure>,
    results: T,
}

#[derive(Serialize)]
struct MatrixFailure {
    matrix: String,
    error: String,
}

fn run_document<'a, T: Serialize>(
    command: &'static str,
    config: &'a RunConfig,
    failures: Vec<MatrixFailure>,
    results: T,
) -> RunDocument<'a, T> {
    RunDocument {
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        host: HostInfo::detect(),
        generator: Some(GENERATOR),
        failures,
        results,
    }
}

fn entropy_in(base: EntropyBase, h: &entropy::BinnedHistogram) -> Result<f64> {
    Ok(base.from_bits(entropy::shannon_entropy(h)?))
}

#[derive(Debug, Serialize)]
struct StrategyComparison {
    strategy: StrategyKind,
    seed: u64,
    row_pivot: Option<usize>,
    col_pivot: Option<usize>,
    row_entropy: f64,
    col_entropy: f64,
    entropy_2d: f64,
    js_rows: f64,
    js_cols: f64,
    js_2d: f64,
}

#[derive(Debug, Serialize)]
struct MatrixAnalysis {
    matrix: String,
    n_rows: usize,
    n_cols: usize,
    nnz: usize,
    entropy_base: EntropyBase,
    bins_rows: usize,
    bins_cols: usize,
    bins_2d: (usize, usize),
    row_entropy: f64,
    col_entropy: f64,
    entropy_2d: f64,
    hierarchical: EntropySummary,
    comparisons: Vec<StrategyComparison>,
    #[serde(skip)]
    csv: Vec<(&'static str, String)>,
}

fn analyze_matrix(path: &Path, cfg: &RunConfig) -> Result<MatrixAnalysis> {
    let m = load_matrix(path)?;
    if m.nnz() == 0 {
        bail!("{} has no nonzeros; entropy is undefined", path.display());
    }
    let base = cfg.entropy_base;
    let br = clamp_bins(cfg.bins_1d, m.n_rows());
    let bc = clamp_bins(cfg.bins_1d, m.n_cols());
    let grid = (clamp_bins(cfg.bins_2d.0, m.n_rows()), clamp_bins(cfg.bins_2d.1, m.n_cols()));
    let rows = entropy::row_histogram(&m, br)?;
    let cols = entropy::col_histogram(&m, bc)?;
    let h2 = entropy::histogram_2d(&m, grid.0, grid.1)?;
    let mut hierarchical = entropy::hierarchical_entropy(&m, &cfg.levels, cfg.bins_2d)?;
    hierarchical.h_bits = base.from_bits(hierarchical.h_bits);
    for g in &mut hierarchical.levels {
        g.cells.iter_mut().for_each(|c| *c = base.from_bits(*c));
    }

    let mut comparisons = Vec::new();
    for &kind in &cfg.strategies {
        let plan = build_strategy(&m, kind, cfg.master_seed, &cfg.strategy_config())?;
        let p = plan.apply(&m)?;
        let (pr, pc) = (entropy::row_histogram(&p, br)?, entropy::col_histogram(&p, bc)?);
        let p2 = entropy::histogram_2d(&p, grid.0, grid.1)?;
        comparisons.push(StrategyComparison {
            strategy: kind,
            seed: cfg.master_seed,
            row_pivot: plan.row_pivot,
            col_pivot: plan.col_pivot,
            row_entropy: entropy_in(base, &pr)?,
            col_entropy: entropy_in(base, &pc)?,
            entropy_2d: entropy_in(base, &p2)?,
            js_rows: entropy::js_divergence(&rows, &pr)?,
            js_cols: entropy::js_divergence(&cols, &pc)?,
            js_2d: entropy::js_divergence(&h2, &p2)?,
        });
    }

    Ok(MatrixAnalysis {
        matrix: matrix_name(path),
        n_rows: m.n_rows(),
        n_cols: m.n_cols(),
        nnz: m.nnz(),
        entropy_base: base,
        bins_rows: br,
        bins_cols: bc,
        bins_2d: grid,
        row_entropy: entropy_in(base, &rows)?,
        col_entropy: entropy_in(base, &cols)?,
        entropy_2d: entropy_in(base, &h2)?,
        csv: vec![
            ("row_hist.csv", rows.to_csv()),
            ("col_hist.csv", cols.to_csv()),
            ("hist2d.csv", h2.to_csv()),
            ("hierarchical.csv", hierarchical.levels_csv()),
        ],
        hierarchical,
        comparisons,
    })
}

/// Writes histograms, hierarchical grids and entropy values per matrix.
/// Returns `false` if any matrix could not be analyzed.
pub fn analyze(cfg: &RunConfig) -> Result<bool> {
    #[cfg(feature = "parallel")]
    let results: Vec<Result<MatrixAnalysis>> = {
        use rayon::prelude::*;
        cfg.matrix_paths.par_iter().map(|p| analyze_matrix(p, cfg)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<MatrixAnalysis>> = cfg.matrix_paths.iter().map(|p| analyze_matrix(p, cfg)).collect();

    let mut failures = Vec::new();
    let mut done = Vec::new();
    for (path, result) in cfg.matrix_paths.iter().zip(results) {
        match result {
            Ok(a) => {
                let dir = cfg.output_dir.join(matrix_stem(path));
                for (name, text) in &a.csv {
                    write_file(&dir.join(name), text)?;
                }
                write_json(&dir.join("entropy.json"), &a)?;
                eprintln!("analyzed {} -> {}", a.matrix, dir.display());
                done.push(a);
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                failures.push(MatrixFailure { matrix: path.display().to_string(), error: format!("{e:#}") });
            }
        }
    }
    let ok = failures.is_empty();
    let names: Vec<&str> = done.iter().map(|a| a.matrix.as_str()).collect();
    write_json(&cfg.output_dir.join("config.json"), &run_document("analyze", cfg, failures, names))?;
    Ok(ok)
}

#[derive(Serialize)]
struct PermuteSidecar {
    matrix: String,
    strategy: StrategyKind,
    seed: u64,
    generator: &'static str,
    row_pivot: Option<usize>,
    col_pivot: Option<usize>,
    entropy_base: EntropyBase,
    bins_2d: (usize, usize),
    entropy_before: f64,
    entropy_after: f64,
    js_2d: f64,
    rows_file: String,
    cols_file: String,
    matrix_file: String,
}

/// Writes the permuted matrix, both permutations and a JSON sidecar.
pub fn permute(cfg: &RunConfig, path: &Path, kind: StrategyKind, seed: u64) -> Result<Vec<PathBuf>> {
    let m = load_matrix(path)?;
    let plan = build_strategy(&m, kind, seed, &cfg.strategy_config())?;
    let p = plan.apply(&m)?;
    let grid = (clamp_bins(cfg.bins_2d.0, m.n_rows()), clamp_bins(cfg.bins_2d.1, m.n_cols()));
    let before = entropy::histogram_2d(&m, grid.0, grid.1)?;
    let after = entropy::histogram_2d(&p, grid.0, grid.1)?;
    let (entropy_before, entropy_after, js_2d) = if m.nnz() == 0 {
        (0.0, 0.0, 0.0)
    } else {
        (entropy_in(cfg.entropy_base, &before)?, entropy_in(cfg.entropy_base, &after)?, entropy::js_divergence(&before, &after)?)
    };

    let stem = format!("{}.{}", matrix_stem(path), kind.code());
    let out = &cfg.output_dir;
    let mtx = out.join(format!("{stem}.mtx"));
    let rows = out.join(format!("{stem}.rows.perm"));
    let cols = out.join(format!("{stem}.cols.perm"));
    let sidecar = out.join(format!("{stem}.json"));
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let open = |p: &Path| File::create(p).map(BufWriter::new).with_context(|| format!("writing {}", p.display()));
    write_matrix_market(&p, open(&mtx)?)?;
    plan.rows.write_text(open(&rows)?)?;
    plan.cols.write_text(open(&cols)?)?;
    let file_name = |p: &Path| p.file_name().unwrap().to_string_lossy().into_owned();
    write_json(
        &sidecar,
        &PermuteSidecar {
            matrix: matrix_name(path),
            strategy: kind,
            seed,
            generator: GENERATOR,
            row_pivot: plan.row_pivot,
            col_pivot: plan.col_pivot,
            entropy_base: cfg.entropy_base,
            bins_2d: grid,
            entropy_before,
            entropy_after,
            js_2d,
            rows_file: file_name(&rows),
            cols_file: file_name(&cols),
            matrix_file: file_name(&mtx),
        },
    )?;
    Ok(vec![mtx, rows, cols, sidecar])
}

/// Which kernel family the hidden `--fail-kernel` flag replaces with a stub.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FailKernel {
    Coo,
    Csr,
    Par,
}

fn kernels_for(n_rows: usize, cfg: &RunConfig, fail: Option<FailKernel>) -> Result<Vec<Box<dyn SpmvKernel>>> {
    let kernels = standard_kernels(n_rows, &cfg.kernel_set())?;
    Ok(kernels
        .into_iter()
        .map(|k| {
            let hit = matches!(
                (fail, k.id()),
                (Some(FailKernel::Coo), KernelId::CpuCoo)
                    | (Some(FailKernel::Csr), KernelId::CpuCsr)
                    | (Some(FailKernel::Par), KernelId::CpuParallel(_))
            );
            if hit {
                Box::new(FailingKernel(k.id())) as Box<dyn SpmvKernel>
            } else {
                k
            }
        })
        .collect())
}

/// Writes `summary.json` and `summary.txt` for `trials` into `out`.
/// Returns `false` if any trial failed.
pub fn write_summary(trials: &[TrialResult], out: &Path) -> Result<bool> {
    let summary = summarize(trials)?;
    write_file(&out.join("summary.json"), summary.to_json())?;
    let text = render_text(&summary);
    write_file(&out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(trials.iter().all(|t| t.correctness_ok))
}

/// Runs the full protocol over every (matrix, strategy). Returns `false`
/// if a matrix failed to load or any trial failed.
pub fn bench(cfg: &RunConfig, fail: Option<FailKernel>) -> Result<bool> {
    let bench_cfg = cfg.bench_config();
    let mut trials: Vec<TrialResult> = Vec::new();
    let mut failures = Vec::new();

    for path in &cfg.matrix_paths {
        let name = matrix_name(path);
        let run = || -> Result<Vec<TrialResult>> {
            let m = load_matrix(path)?;
            let kernels = kernels_for(m.n_rows(), cfg, fail)?;
            let mut harness = MatrixBench::new(name.clone(), &m, kernels, &bench_cfg)?;
            let mut out = Vec::new();
            for &kind in &cfg.strategies {
                eprintln!("bench {name}: {}", kind.label());
                out.extend(harness.run_experiment(kind)?);
            }
            Ok(out)
        };
        match run() {
            Ok(t) => trials.extend(t),
            Err(e) => {
                eprintln!("error: {e:#}");
                failures.push(MatrixFailure { matrix: path.display().to_string(), error: format!("{e:#}") });
            }
        }
    }

    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let log = out.join("trials.jsonl");
    bench::write_trials(&trials, BufWriter::new(File::create(&log).with_context(|| format!("writing {}", log.display()))?))?;
    let failed_trials = trials.iter().filter(|t| !t.correctness_ok).count();
    let matrices_ok = failures.is_empty();
    write_json(&out.join("config.json"), &run_document("bench", cfg, failures, serde_json::json!({ "trials": trials.len(), "failed_trials": failed_trials })))?;
    if trials.is_empty() {
        bail!("no trials were recorded");
    }
    let trials_ok = write_summary(&trials, out)?;
    if failed_trials > 0 {
        eprintln!("{failed_trials} trial(s) failed");
    }
    Ok(matrices_ok && trials_ok)
}

/// Re-summarizes a persisted trial log without re-timing.
pub fn report(log: &Path, out: &Path) -> Result<bool> {
    let file = File::open(log).with_context(|| format!("opening {}", log.display()))?;
    let trials = bench::read_trials(BufReader::new(file)).with_context(|| format!("reading {}", log.display()))?;
    write_summary(&trials, out)
}
