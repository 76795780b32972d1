//! Pure summarization of trial logs into per-strategy records, best-marking,
//! and the fixed-width text table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{BenchError, KernelId, TrialResult};
use crate::permute::StrategyKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub best: bool,
}

impl MetricStats {
    /// Stats over a non-empty slice, accumulated in slice order.
    pub fn from_values(values: &[f64]) -> MetricStats {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        // Rounding in the sum can push the mean a hair outside [min, max].
        MetricStats { min, max, mean: mean.clamp(min, max), best: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelStats {
    /// For the parallel kernel, the reported worker count.
    pub kernel: KernelId,
    pub stats: MetricStats,
    /// Trials that errored or failed their output check (counted as 0).
    pub failed: usize,
}

/// Summary of one (matrix, strategy) experiment across its repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub matrix: String,
    pub strategy: StrategyKind,
    pub kernels: Vec<KernelStats>,
    pub entropy: MetricStats,
}

impl BenchRecord {
    /// Stats for the kernel family of `id` (any worker count matches a
    /// parallel id).
    pub fn kernel(&self, id: KernelId) -> Option<&KernelStats> {
        self.kernels.iter().find(|k| family(k.kernel) == family(id))
    }
}

fn family(id: KernelId) -> u8 {
    match id {
        KernelId::CpuCoo => 0,
        KernelId::CpuCsr => 1,
        KernelId::CpuParallel(_) => 2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct JsonStat {
    min: f64,
    max: f64,
    mean: f64,
    best: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failed: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub records: Vec<BenchRecord>,
}

impl Summary {
    pub fn failed_trials(&self) -> usize {
        self.records.iter().flat_map(|r| &r.kernels).map(|k| k.failed).sum()
    }

    /// JSON keyed matrix -> strategy -> kernel (plus `H`) -> stats.
    pub fn to_json(&self) -> String {
        let mut doc: IndexMap<&str, IndexMap<&str, IndexMap<&str, JsonStat>>> = IndexMap::new();
        for r in &self.records {
            let mut rows = IndexMap::new();
            for k in &r.kernels {
                let s = k.stats;
                rows.insert(
                    k.kernel.label(),
                    JsonStat {
                        min: s.min,
                        max: s.max,
                        mean: s.mean,
                        best: s.best,
                        workers: k.kernel.workers(),
                        failed: Some(k.failed),
                    },
                );
            }
            let e = r.entropy;
            rows.insert("H", JsonStat { min: e.min, max: e.max, mean: e.mean, best: e.best, workers: None, failed: None });
            doc.entry(r.matrix.as_str()).or_default().insert(r.strategy.label(), rows);
        }
        let mut out = serde_json::to_string_pretty(&doc).expect("summary serializes");
        out.push('\n');
        out
    }
}

/// Groups trials by matrix (first-seen order) and strategy (table order).
/// Failed trials enter min/mean as zeros. The parallel kernel is reported at
/// the worker count with the largest max GFLOPS (ties to fewer workers).
pub fn summarize(trials: &[TrialResult]) -> Result<Summary, BenchError> {
    if trials.is_empty() {
        return Err(BenchError::NoTrials);
    }
    let mut matrices: Vec<&str> = Vec::new();
    for t in trials {
        if !matrices.contains(&t.matrix.as_str()) {
            matrices.push(&t.matrix);
        }
    }

    let mut records = Vec::new();
    for matrix in matrices {
        let mut by_strategy: BTreeMap<StrategyKind, Vec<&TrialResult>> = BTreeMap::new();
        for t in trials.iter().filter(|t| t.matrix == matrix) {
            by_strategy.entry(t.strategy).or_default().push(t);
        }
        let mut group = Vec::new();
        for (strategy, ts) in by_strategy {
            let mut by_kernel: BTreeMap<KernelId, Vec<&TrialResult>> = BTreeMap::new();
            let mut entropy_by_repeat = BTreeMap::new();
            for t in &ts {
                by_kernel.entry(t.kernel).or_default().push(t);
                entropy_by_repeat.entry(t.repeat).or_insert(t.entropy_bits);
            }
            let mut kernels: Vec<KernelStats> = Vec::new();
            for (kernel, kt) in by_kernel {
                let rates: Vec<f64> = kt.iter().map(|t| t.gflops).collect();
                let stats = KernelStats {
                    kernel,
                    stats: MetricStats::from_values(&rates),
                    failed: kt.iter().filter(|t| !t.correctness_ok).count(),
                };
                match kernels.last_mut() {
                    Some(prev) if family(prev.kernel) == family(kernel) => {
                        if stats.stats.max > prev.stats.max {
                            *prev = stats;
                        }
                    }
                    _ => kernels.push(stats),
                }
            }
            let entropies: Vec<f64> = entropy_by_repeat.into_values().collect();
            group.push(BenchRecord {
                matrix: matrix.to_string(),
                strategy,
                kernels,
                entropy: MetricStats::from_values(&entropies),
            });
        }
        best_mark(&mut group)?;
        records.extend(group);
    }
    Ok(Summary { records })
}

/// Marks, per kernel and for entropy, the strategy with the largest max.
/// Ties go to the earlier strategy in table order.
pub fn best_mark(records: &mut [BenchRecord]) -> Result<(), BenchError> {
    if records.is_empty() {
        return Err(BenchError::NoRecords);
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| records[i].strategy.rank());

    for fam in 0..3u8 {
        let mut best: Option<(usize, usize, f64)> = None;
        for &i in &order {
            for (j, k) in records[i].kernels.iter_mut().enumerate() {
                if family(k.kernel) != fam {
                    continue;
                }
                k.stats.best = false;
                if best.is_none_or(|(_, _, m)| k.stats.max > m) {
                    best = Some((i, j, k.stats.max));
                }
            }
        }
        if let Some((i, j, _)) = best {
            records[i].kernels[j].stats.best = true;
        }
    }

    let mut best = order[0];
    for &i in &order {
        records[i].entropy.best = false;
        if records[i].entropy.max > records[best].entropy.max {
            best = i;
        }
    }
    records[best].entropy.best = true;
    Ok(())
}

fn row(out: &mut String, label: &str, s: &MetricStats) {
    let marker = if s.best { '*' } else { ' ' };
    let _ = writeln!(
        out,
        "{:26}{:<11}min {:6.3} max{}{:6.3} mean {:6.3}",
        "", label, s.min, marker, s.max, s.mean
    );
}

/// Fixed-width table: matrix heading, one block per strategy, a row per
/// kernel and an `H` row for entropy; `*` follows `max` on the best row.
pub fn render_text(summary: &Summary) -> String {
    let mut out = String::new();
    let mut current: Option<&str> = None;
    for r in &summary.records {
        if current != Some(r.matrix.as_str()) {
            let _ = writeln!(out, "{}", r.matrix);
            current = Some(&r.matrix);
        }
        let _ = writeln!(out, " {}", r.strategy.label());
        for k in &r.kernels {
            row(&mut out, k.kernel.label(), &k.stats);
        }
        row(&mut out, "H", &r.entropy);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(strategy: StrategyKind, kernel: KernelId, repeat: usize, gflops: f64, entropy: f64) -> TrialResult {
        TrialResult {
            matrix: "m.mtx".into(),
            strategy,
            kernel,
            repeat,
            seed: repeat as u64,
            iterations: 1000,
            seconds_per_call: 1e-6,
            gflops,
            entropy_bits: entropy,
            correctness_ok: gflops > 0.0,
        }
    }

    fn record(strategy: StrategyKind, coo_max: f64) -> BenchRecord {
        let s = MetricStats { min: 0.0, max: coo_max, mean: 0.0, best: false };
        BenchRecord {
            matrix: "m".into(),
            strategy,
            kernels: vec![KernelStats { kernel: KernelId::CpuCoo, stats: s, failed: 0 }],
            entropy: s,
        }
    }

    #[test]
    fn best_mark_rules() {
        let mut one = vec![record(StrategyKind::RowGradient, 1.0)];
        best_mark(&mut one).unwrap();
        assert!(one[0].kernels[0].stats.best);

        let mut two = vec![record(StrategyKind::Regular, 10.39), record(StrategyKind::RowPermute, 9.43)];
        best_mark(&mut two).unwrap();
        assert!(two[0].kernels[0].stats.best && !two[1].kernels[0].stats.best);

        // Tie: table order wins even when records arrive out of order.
        let mut tie = vec![record(StrategyKind::RowColumnPermute, 5.0), record(StrategyKind::RowGradient, 5.0)];
        best_mark(&mut tie).unwrap();
        assert!(tie[1].kernels[0].stats.best && !tie[0].kernels[0].stats.best);

        assert!(best_mark(&mut []).is_err());
    }

    #[test]
    fn zeros_enter_statistics() {
        let trials = vec![
            trial(StrategyKind::Regular, KernelId::CpuCsr, 0, 0.0, 3.0),
            trial(StrategyKind::Regular, KernelId::CpuCsr, 1, 16.29, 3.0),
            trial(StrategyKind::Regular, KernelId::CpuCsr, 2, 14.0, 3.0),
        ];
        let s = summarize(&trials).unwrap();
        let k = &s.records[0].kernels[0];
        assert_eq!((k.stats.min, k.stats.max), (0.0, 16.29));
        assert!((k.stats.mean - 30.29 / 3.0).abs() < 1e-12);
        assert_eq!(k.failed, 1);
        assert_eq!(s.failed_trials(), 1);
        let h = s.records[0].entropy;
        assert_eq!((h.min, h.max, h.mean), (3.0, 3.0, 3.0));
    }

    #[test]
    fn parallel_reports_best_worker_count() {
        let trials = vec![
            trial(StrategyKind::Regular, KernelId::CpuParallel(1), 0, 1.0, 1.0),
            trial(StrategyKind::Regular, KernelId::CpuParallel(2), 0, 3.0, 1.0),
            trial(StrategyKind::Regular, KernelId::CpuParallel(4), 0, 3.0, 1.0),
        ];
        let s = summarize(&trials).unwrap();
        assert_eq!(s.records[0].kernels.len(), 1);
        assert_eq!(s.records[0].kernels[0].kernel, KernelId::CpuParallel(2));
        assert!(s.to_json().contains("\"workers\": 2"));
    }

    #[test]
    fn text_rows() {
        let trials = vec![
            trial(StrategyKind::RowPermute, KernelId::CpuCoo, 0, 0.728, 9.689),
            trial(StrategyKind::Regular, KernelId::CpuCoo, 0, 18.97, 9.689),
        ];
        let text = render_text(&summarize(&trials).unwrap());
        let expected = "m.mtx\n Regular\n                          CPU COO    min 18.970 max*18.970 mean 18.970\n                          H          min  9.689 max* 9.689 mean  9.689\n Row-Permute\n                          CPU COO    min  0.728 max  0.728 mean  0.728\n                          H          min  9.689 max  9.689 mean  9.689\n";
        assert_eq!(text, expected);
    }
}
