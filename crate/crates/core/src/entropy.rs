//! Binned nonzero histograms and the uniformity measures built on them:
//! Shannon entropy, hierarchical 2D entropy grids, and Jensen-Shannon
//! divergence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matio::CooMatrix;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EntropyError {
    #[error("bin count {bins} must lie in 1..={extent}")]
    InvalidBins { bins: usize, extent: usize },
    #[error("histogram has no mass")]
    EmptyHistogram,
    #[error("histograms have {left} and {right} bins")]
    BinMismatch { left: usize, right: usize },
    #[error("no hierarchical levels requested")]
    NoLevels,
}

/// Equal-width bins over `[0, extent)`. The last bin absorbs the remainder
/// when `extent` is not a multiple of `bins`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binning {
    extent: usize,
    bins: usize,
}

impl Binning {
    pub fn new(extent: usize, bins: usize) -> Result<Self, EntropyError> {
        if bins == 0 || bins > extent {
            return Err(EntropyError::InvalidBins { bins, extent });
        }
        Ok(Binning { extent, bins })
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    fn width(&self) -> usize {
        self.extent / self.bins
    }

    #[inline]
    pub fn bin_of(&self, index: usize) -> usize {
        (index / self.width()).min(self.bins - 1)
    }

    /// First index covered by bin `b`.
    pub fn bin_start(&self, b: usize) -> usize {
        b * self.width()
    }

    /// One past the last index covered by bin `b`.
    pub fn bin_end(&self, b: usize) -> usize {
        if b + 1 == self.bins {
            self.extent
        } else {
            (b + 1) * self.width()
        }
    }
}

/// Clamps a requested bin count to `[1, extent]`.
pub fn clamp_bins(requested: usize, extent: usize) -> usize {
    requested.clamp(1, extent.max(1))
}

/// Nonzero counts over one (1D) or two (2D, row-major) binned axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedHistogram {
    counts: Vec<u64>,
    axes: Vec<Binning>,
}

impl BinnedHistogram {
    /// A 1D histogram over unit-width bins holding `counts` as given.
    pub fn from_counts(counts: Vec<u64>) -> Result<Self, EntropyError> {
        let axis = Binning::new(counts.len(), counts.len())?;
        Ok(BinnedHistogram { counts, axes: vec![axis] })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn axes(&self) -> &[Binning] {
        &self.axes
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `(rows, cols)` of bins; a 1D histogram reports one column.
    pub fn grid_shape(&self) -> (usize, usize) {
        match self.axes.as_slice() {
            [r, c] => (r.bins(), c.bins()),
            _ => (self.counts.len(), 1),
        }
    }

    /// CSV rows `bin,count` (1D) or `row_bin,col_bin,count` (2D), no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let (_, cols) = self.grid_shape();
        for (k, c) in self.counts.iter().enumerate() {
            if self.axes.len() == 2 {
                out.push_str(&format!("{},{},{}\n", k / cols, k % cols, c));
            } else {
                out.push_str(&format!("{k},{c}\n"));
            }
        }
        out
    }
}

fn histogram_1d(indices: &[usize], extent: usize, bins: usize) -> Result<BinnedHistogram, EntropyError> {
    let axis = Binning::new(extent, bins)?;
    let mut counts = vec![0u64; bins];
    for &i in indices {
        counts[axis.bin_of(i)] += 1;
    }
    Ok(BinnedHistogram { counts, axes: vec![axis] })
}

/// Height histogram: nonzeros per equal-width row bin.
pub fn row_histogram(m: &CooMatrix, bins: usize) -> Result<BinnedHistogram, EntropyError> {
    histogram_1d(m.row_indices(), m.n_rows(), bins)
}

/// Width histogram: nonzeros per equal-width column bin.
pub fn col_histogram(m: &CooMatrix, bins: usize) -> Result<BinnedHistogram, EntropyError> {
    histogram_1d(m.col_indices(), m.n_cols(), bins)
}

/// Nonzeros per `(row bin, column bin)` cell, row-major.
pub fn histogram_2d(m: &CooMatrix, bins_r: usize, bins_c: usize) -> Result<BinnedHistogram, EntropyError> {
    let rows = Binning::new(m.n_rows(), bins_r)?;
    let cols = Binning::new(m.n_cols(), bins_c)?;
    let mut counts = vec![0u64; bins_r * bins_c];
    for (&r, &c) in m.row_indices().iter().zip(m.col_indices()) {
        counts[rows.bin_of(r) * bins_c + cols.bin_of(c)] += 1;
    }
    Ok(BinnedHistogram { counts, axes: vec![rows, cols] })
}

/// Logarithm base used when reporting entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EntropyBase {
    #[default]
    #[serde(rename = "2")]
    Bits,
    #[serde(rename = "e")]
    Nats,
}

impl EntropyBase {
    /// Converts a value in bits to this base.
    pub fn from_bits(self, bits: f64) -> f64 {
        match self {
            EntropyBase::Bits => bits,
            EntropyBase::Nats => bits * std::f64::consts::LN_2,
        }
    }
}

impl std::str::FromStr for EntropyBase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "2" => Ok(EntropyBase::Bits),
            "e" => Ok(EntropyBase::Nats),
            other => Err(format!("entropy base must be `2` or `e`, got `{other}`")),
        }
    }
}

fn entropy_of_counts(counts: impl Iterator<Item = u64> + Clone) -> f64 {
    let total: u64 = counts.clone().sum();
    if total == 0 {
        return 0.0;
    }
    let s = total as f64;
    -counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / s;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Shannon entropy in bits, `-sum p_i log2 p_i`, skipping empty bins.
pub fn shannon_entropy(h: &BinnedHistogram) -> Result<f64, EntropyError> {
    if h.total() == 0 {
        return Err(EntropyError::EmptyHistogram);
    }
    Ok(entropy_of_counts(h.counts.iter().copied()))
}

/// Jensen-Shannon divergence in bits between two histograms with the same
/// number of bins. Symmetric and bounded by 1.
pub fn js_divergence(p: &BinnedHistogram, q: &BinnedHistogram) -> Result<f64, EntropyError> {
    if p.bins() != q.bins() {
        return Err(EntropyError::BinMismatch { left: p.bins(), right: q.bins() });
    }
    let (sp, sq) = (p.total(), q.total());
    if sp == 0 || sq == 0 {
        return Err(EntropyError::EmptyHistogram);
    }
    let (sp, sq) = (sp as f64, sq as f64);
    // Sum the two KL terms against the midpoint; equal to H(m) - H(p)/2 - H(q)/2.
    let mut acc = 0.0;
    for (&a, &b) in p.counts.iter().zip(&q.counts) {
        let pa = a as f64 / sp;
        let qb = b as f64 / sq;
        let mid = 0.5 * (pa + qb);
        if pa > 0.0 {
            acc += pa * (pa / mid).log2();
        }
        if qb > 0.0 {
            acc += qb * (qb / mid).log2();
        }
    }
    Ok((0.5 * acc).clamp(0.0, 1.0))
}

/// Per-cell entropies of one `level x level` grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyGrid {
    pub level: usize,
    pub cells: Vec<f64>,
}

impl EntropyGrid {
    pub fn cell(&self, a: usize, b: usize) -> f64 {
        self.cells[a * self.level + b]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySummary {
    /// Entropy of the whole fine-resolution 2D histogram, in bits.
    pub h_bits: f64,
    /// Number of fine bins the entropy was taken over.
    pub b_total: usize,
    pub levels: Vec<EntropyGrid>,
}

impl EntropySummary {
    /// CSV rows `level,row,col,entropy`, no header.
    pub fn levels_csv(&self) -> String {
        let mut out = String::new();
        for grid in &self.levels {
            for (k, h) in grid.cells.iter().enumerate() {
                out.push_str(&format!("{},{},{},{}\n", grid.level, k / grid.level, k % grid.level, h));
            }
        }
        out
    }
}

fn level_grid(fine: &BinnedHistogram, level: usize) -> EntropyGrid {
    let (fr, fc) = fine.grid_shape();
    let rows = Binning { extent: fr, bins: level };
    let cols = Binning { extent: fc, bins: level };
    let mut cells = vec![Vec::new(); level * level];
    for (k, &c) in fine.counts.iter().enumerate() {
        cells[rows.bin_of(k / fc) * level + cols.bin_of(k % fc)].push(c);
    }
    EntropyGrid {
        level,
        cells: cells.iter().map(|cell| entropy_of_counts(cell.iter().copied())).collect(),
    }
}

/// Hierarchical 2D entropy. A fine `fine_r x fine_c` histogram (clamped to
/// the matrix shape) is grouped into `L x L` cells for each requested level
/// `L`; each cell holds the entropy of the fine bins it contains. Levels
/// larger than the matrix or the fine grid are dropped.
pub fn hierarchical_entropy(
    m: &CooMatrix,
    levels: &[usize],
    fine: (usize, usize),
) -> Result<EntropySummary, EntropyError> {
    if levels.is_empty() {
        return Err(EntropyError::NoLevels);
    }
    if let Some(&bad) = levels.iter().find(|&&l| l == 0) {
        return Err(EntropyError::InvalidBins { bins: bad, extent: m.n_rows().min(m.n_cols()) });
    }
    let fr = clamp_bins(fine.0, m.n_rows());
    let fc = clamp_bins(fine.1, m.n_cols());
    let fine_hist = histogram_2d(m, fr, fc)?;
    let limit = m.n_rows().min(m.n_cols()).min(fr).min(fc);
    let kept: Vec<usize> = levels.iter().copied().filter(|&l| l <= limit).collect();

    #[cfg(feature = "parallel")]
    let grids = {
        use rayon::prelude::*;
        kept.par_iter().map(|&l| level_grid(&fine_hist, l)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let grids = kept.iter().map(|&l| level_grid(&fine_hist, l)).collect();

    Ok(EntropySummary {
        h_bits: entropy_of_counts(fine_hist.counts.iter().copied()),
        b_total: fine_hist.bins(),
        levels: grids,
    })
}
