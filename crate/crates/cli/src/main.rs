mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use spmv_entropy::permute::ColumnGradientAxes;
use spmv_entropy::{EntropyBase, StrategyKind, WorkerMode};

use crate::commands::FailKernel;
use crate::config::{parse_grid, parse_list, RunConfig};

#[derive(Parser)]
#[command(name = "spmv-entropy", version, about = "Entropy-guided sparse matrix randomization and SpMV benchmarking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Histograms, hierarchical entropy grids and per-strategy comparisons.
    Analyze(RunArgs),
    /// Apply one strategy and write the permuted matrix and permutations.
    Permute(PermuteArgs),
    /// Time COO, CSR and parallel CSR SpMV under each strategy.
    Bench(BenchArgs),
    /// Re-summarize a raw trial log without re-timing.
    Report(ReportArgs),
    /// List the SuiteSparse matrices used in the reference tables.
    Matrices,
}

#[derive(Args)]
struct RunArgs {
    /// Matrix Market files.
    matrices: Vec<PathBuf>,
    /// Start from a config echo (`config.json`) written by an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bins for row and column histograms (clamped to each dimension).
    #[arg(long, value_name = "N")]
    bins_1d: Option<usize>,
    /// 2D histogram resolution, e.g. `128x128`.
    #[arg(long, value_name = "RxC", value_parser = parse_grid)]
    bins_2d: Option<(usize, usize)>,
    /// Hierarchical grid sizes, e.g. `2,4,8`.
    #[arg(long, value_name = "L,..")]
    levels: Option<String>,
    #[arg(long, value_name = "N")]
    repeats: Option<usize>,
    /// Master seed for permutations and the input vector.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Wall time each timed loop aims for.
    #[arg(long, value_name = "S")]
    target_seconds: Option<f64>,
    /// Strategy codes: reg, r, rc, gr, gc.
    #[arg(long, value_name = "LIST")]
    strategies: Option<String>,
    #[arg(long, value_name = "P")]
    max_workers: Option<usize>,
    #[arg(long, value_name = "2|e")]
    entropy_base: Option<EntropyBase>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Spawn threads on every parallel call instead of reusing a pool.
    #[arg(long)]
    spawn_per_call: bool,
    /// Column-gradient strategy shuffles columns only.
    #[arg(long)]
    columns_only_gradient: bool,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if !self.matrices.is_empty() {
            cfg.matrix_paths = self.matrices;
        }
        if let Some(v) = self.bins_1d {
            cfg.bins_1d = v;
        }
        if let Some(v) = self.bins_2d {
            cfg.bins_2d = v;
        }
        if let Some(v) = self.levels {
            cfg.levels = parse_list(&v).map_err(anyhow::Error::msg)?;
        }
        if let Some(v) = self.repeats {
            cfg.repeats = v;
        }
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
        if let Some(v) = self.target_seconds {
            cfg.target_seconds = v;
        }
        if let Some(v) = self.strategies {
            cfg.strategies = parse_list::<StrategyKind>(&v).map_err(anyhow::Error::msg)?;
        }
        if let Some(v) = self.max_workers {
            cfg.max_workers = v;
        }
        if let Some(v) = self.entropy_base {
            cfg.entropy_base = v;
        }
        if let Some(v) = self.out {
            cfg.output_dir = v;
        }
        if self.spawn_per_call {
            cfg.worker_mode = WorkerMode::SpawnPerCall;
        }
        if self.columns_only_gradient {
            cfg.column_gradient = ColumnGradientAxes::ColumnsOnly;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct PermuteArgs {
    /// Matrix Market file.
    matrix: PathBuf,
    /// Strategy code: reg, r, rc, gr, gc.
    #[arg(long)]
    strategy: StrategyKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "N", default_value_t = 512)]
    bins_1d: usize,
    #[arg(long, value_name = "RxC", value_parser = parse_grid, default_value = "128x128")]
    bins_2d: (usize, usize),
    #[arg(long, value_name = "2|e", default_value = "2")]
    entropy_base: EntropyBase,
    #[arg(long)]
    columns_only_gradient: bool,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Rebuild the summary from an existing trial log instead of timing.
    #[arg(long, value_name = "LOG")]
    resummarize: Option<PathBuf>,
    /// Replace one kernel family with a stub that always fails.
    #[arg(long, hide = true, value_enum)]
    fail_kernel: Option<FailKernel>,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON Lines trial log written by `bench`.
    log: PathBuf,
    /// Output directory (defaults to the log's directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn log_dir(log: &std::path::Path) -> PathBuf {
    log.parent().filter(|p| !p.as_os_str().is_empty()).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Analyze(args) => {
            let cfg = args.into_config()?;
            cfg.validate(true)?;
            commands::analyze(&cfg)
        }
        Command::Permute(args) => {
            let cfg = RunConfig {
                matrix_paths: vec![args.matrix.clone()],
                bins_1d: args.bins_1d,
                bins_2d: args.bins_2d,
                entropy_base: args.entropy_base,
                column_gradient: if args.columns_only_gradient {
                    ColumnGradientAxes::ColumnsOnly
                } else {
                    ColumnGradientAxes::Both
                },
                output_dir: args.out,
                master_seed: args.seed,
                strategies: vec![args.strategy],
                ..RunConfig::default()
            };
            cfg.validate(true)?;
            for path in commands::permute(&cfg, &args.matrix, args.strategy, args.seed)? {
                println!("{}", path.display());
            }
            Ok(true)
        }
        Command::Bench(args) => match args.resummarize {
            Some(log) => {
                let out = args.run.out.clone().unwrap_or_else(|| log_dir(&log));
                commands::report(&log, &out)
            }
            None => {
                let cfg = args.run.into_config()?;
                cfg.validate(true)?;
                commands::bench(&cfg, args.fail_kernel)
            }
        },
        Command::Report(args) => {
            let out = args.out.unwrap_or_else(|| log_dir(&args.log));
            commands::report(&args.log, &out)
        }
        Command::Matrices => {
            for name in commands::REFERENCE_MATRICES {
                println!("{name}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
