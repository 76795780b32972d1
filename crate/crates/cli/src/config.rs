use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use spmv_entropy::bench::{BenchConfig, KernelSet};
use spmv_entropy::permute::{ColumnGradientAxes, StrategyConfig};
use spmv_entropy::{EntropyBase, StrategyKind, WorkerMode};

/// Every parameter of a run. Written next to the outputs so the run can be
/// repeated with `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub matrix_paths: Vec<PathBuf>,
    pub strategies: Vec<StrategyKind>,
    pub repeats: usize,
    pub master_seed: u64,
    pub bins_1d: usize,
    pub bins_2d: (usize, usize),
    pub levels: Vec<usize>,
    pub target_seconds: f64,
    pub max_workers: usize,
    pub worker_mode: WorkerMode,
    pub column_gradient: ColumnGradientAxes,
    pub output_dir: PathBuf,
    pub entropy_base: EntropyBase,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            matrix_paths: Vec::new(),
            strategies: StrategyKind::ALL.to_vec(),
            repeats: 32,
            master_seed: 0,
            bins_1d: 512,
            bins_2d: (128, 128),
            levels: vec![2, 4, 8],
            target_seconds: 2.0,
            max_workers: 16,
            worker_mode: WorkerMode::Pool,
            column_gradient: ColumnGradientAxes::Both,
            output_dir: PathBuf::from("out"),
            entropy_base: EntropyBase::Bits,
        }
    }
}

impl RunConfig {
    pub fn validate(&self, need_matrices: bool) -> Result<()> {
        if need_matrices && self.matrix_paths.is_empty() {
            bail!("at least one matrix path is required");
        }
        if self.repeats == 0 {
            bail!("--repeats must be at least 1");
        }
        if self.bins_1d == 0 || self.bins_2d.0 == 0 || self.bins_2d.1 == 0 {
            bail!("bin counts must be at least 1");
        }
        if self.levels.is_empty() || self.levels.contains(&0) {
            bail!("--levels needs at least one positive grid size");
        }
        if self.max_workers == 0 {
            bail!("--max-workers must be at least 1");
        }
        if self.strategies.is_empty() {
            bail!("--strategies must name at least one strategy");
        }
        if !(self.target_seconds > 0.0 && self.target_seconds.is_finite()) {
            bail!("--target-seconds must be positive");
        }
        Ok(())
    }

    pub fn strategy_config(&self) -> StrategyConfig {
        StrategyConfig { bins: self.bins_1d, column_gradient: self.column_gradient }
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            repeats: self.repeats,
            master_seed: self.master_seed,
            strategy: self.strategy_config(),
            bins_2d: self.bins_2d,
            entropy_base: self.entropy_base,
            target_seconds: self.target_seconds,
        }
    }

    pub fn kernel_set(&self) -> KernelSet {
        KernelSet { max_workers: self.max_workers, worker_mode: self.worker_mode, ..KernelSet::default() }
    }

    /// Reads a config echo: either a bare `RunConfig` or a run document with a
    /// `config` field.
    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let inner = value.get("config").cloned().unwrap_or(value);
        serde_json::from_value(inner).with_context(|| format!("{} is not a run config", path.display()))
    }
}

pub fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("invalid bin count `{t}`"));
    match s.split_once(['x', 'X']) {
        Some((r, c)) => Ok((parse(r)?, parse(c)?)),
        None => {
            let n = parse(s)?;
            Ok((n, n))
        }
    }
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',').filter(|t| !t.trim().is_empty()).map(|t| t.trim().parse::<T>().map_err(|e| e.to_string())).collect()
}

/// Machine description stored alongside results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HostInfo {
    pub cpu_model: String,
    pub logical_cores: usize,
    pub os: String,
    pub arch: String,
    pub parallel_feature: bool,
}

impl HostInfo {
    pub fn detect() -> HostInfo {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split_once(':'))
                    .map(|(_, v)| v.trim().to_string())
            })
            .unwrap_or_else(|| "unknown".into());
        HostInfo {
            cpu_model,
            logical_cores: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            parallel_feature: cfg!(feature = "parallel"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_and_lists() {
        assert_eq!(parse_grid("128x64").unwrap(), (128, 64));
        assert_eq!(parse_grid("32").unwrap(), (32, 32));
        assert!(parse_grid("ax2").is_err());
        assert_eq!(parse_list::<usize>("2,4,8").unwrap(), vec![2, 4, 8]);
        assert_eq!(
            parse_list::<StrategyKind>("reg,gc").unwrap(),
            vec![StrategyKind::Regular, StrategyKind::ColumnGradient]
        );
    }

    #[test]
    fn config_echo_round_trips() {
        let cfg = RunConfig { matrix_paths: vec!["a.mtx".into()], ..RunConfig::default() };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert!(cfg.validate(true).is_ok());
        assert!(RunConfig::default().validate(true).is_err());
    }
}
