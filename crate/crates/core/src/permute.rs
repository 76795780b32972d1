//! Permutations and the row/column randomization strategies.
//!
//! A [`Permutation`] maps position `i` to `forward[i]`. Applying `(P_r, P_c)`
//! to a matrix moves entry `(i, j)` to `(P_r[i], P_c[j])`; permuting the input
//! vector by `P_c` and inverse-permuting the output by `P_r` recovers `A x`.

use std::io::{self, BufRead, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::{self, clamp_bins, BinnedHistogram, EntropyBase, EntropyError};
use crate::matio::CooMatrix;

/// Identifies the random stream used for every permutation: ChaCha8 seeded
/// with `seed_from_u64`, Fisher-Yates from the top index down.
pub const GENERATOR: &str = "chacha8/fisher-yates/v1";

#[derive(Debug, Error)]
pub enum PermutationError {
    #[error("permutation size must be at least 1")]
    Empty,
    #[error("not a bijection on 0..{0}")]
    NotBijection(usize),
    #[error("size mismatch: permutation has {found} entries, expected {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("pivot {pivot} must lie strictly between 0 and {n}")]
    PivotOutOfRange { pivot: usize, n: usize },
    #[error("gradient needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    forward: Vec<usize>,
}

impl Permutation {
    /// Validates that `forward` is a bijection on `0..forward.len()`.
    pub fn new(forward: Vec<usize>) -> Result<Self, PermutationError> {
        let n = forward.len();
        if n == 0 {
            return Err(PermutationError::Empty);
        }
        let mut seen = vec![false; n];
        for &f in &forward {
            if f >= n || std::mem::replace(&mut seen[f], true) {
                return Err(PermutationError::NotBijection(n));
            }
        }
        Ok(Permutation { forward })
    }

    pub fn identity(n: usize) -> Self {
        Permutation { forward: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn is_identity(&self) -> bool {
        self.forward.iter().enumerate().all(|(i, &f)| i == f)
    }

    /// Sorted copy equals `0..n`.
    pub fn is_bijection(&self) -> bool {
        let mut sorted = self.forward.clone();
        sorted.sort_unstable();
        sorted.iter().enumerate().all(|(i, &f)| i == f)
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.forward.len()];
        for (i, &f) in self.forward.iter().enumerate() {
            inv[f] = i;
        }
        Permutation { forward: inv }
    }

    /// `self` followed by `next`: `i -> next[self[i]]`.
    pub fn then(&self, next: &Permutation) -> Result<Permutation, PermutationError> {
        check_size(self.len(), next.len())?;
        Ok(Permutation { forward: self.forward.iter().map(|&f| next.forward[f]).collect() })
    }

    /// Text form: `n` on the first line, then one 0-based image per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.forward.len())?;
        for f in &self.forward {
            writeln!(w, "{f}")?;
        }
        w.flush()
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self, PermutationError> {
        let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
        let parse = |line: usize, s: &str| {
            s.trim().parse::<usize>().map_err(|_| PermutationError::Parse { line, msg: format!("invalid index `{s}`") })
        };
        let (line, first) = lines.next().ok_or(PermutationError::Parse { line: 1, msg: "empty file".into() })?;
        let n = parse(line, &first?)?;
        let mut forward = Vec::with_capacity(n);
        for (line, text) in lines {
            let text = text?;
            if text.trim().is_empty() {
                continue;
            }
            forward.push(parse(line, &text)?);
        }
        if forward.len() != n {
            return Err(PermutationError::Parse {
                line: 1,
                msg: format!("declared {n} entries, found {}", forward.len()),
            });
        }
        Permutation::new(forward)
    }
}

fn check_size(expected: usize, found: usize) -> Result<(), PermutationError> {
    if expected == found {
        Ok(())
    } else {
        Err(PermutationError::SizeMismatch { expected, found })
    }
}

fn fisher_yates<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        // u64 bounds keep the draw sequence identical on 32- and 64-bit targets.
        let j = rng.gen_range(0..=i as u64) as usize;
        items.swap(i, j);
    }
}

/// Uniform random permutation of `0..n`, fully determined by `seed`.
pub fn random_permutation(n: usize, seed: u64) -> Result<Permutation, PermutationError> {
    if n == 0 {
        return Err(PermutationError::Empty);
    }
    let mut forward: Vec<usize> = (0..n).collect();
    fisher_yates(&mut forward, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok(Permutation { forward })
}

/// `count` per-repeat seeds derived from one master seed.
pub fn derive_seeds(master: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..count).map(|_| rng.next_u64()).collect()
}

/// Moves entry `(i, j)` to `(p[i], j)`.
pub fn permute_rows(m: &CooMatrix, p: &Permutation) -> Result<CooMatrix, PermutationError> {
    check_size(m.n_rows(), p.len())?;
    Ok(CooMatrix::from_parts_unchecked(
        m.n_rows(),
        m.n_cols(),
        m.row_indices().iter().map(|&r| p.forward[r]).collect(),
        m.col_indices().to_vec(),
        m.values().to_vec(),
    ))
}

/// Moves entry `(i, j)` to `(i, p[j])`.
pub fn permute_cols(m: &CooMatrix, p: &Permutation) -> Result<CooMatrix, PermutationError> {
    check_size(m.n_cols(), p.len())?;
    Ok(CooMatrix::from_parts_unchecked(
        m.n_rows(),
        m.n_cols(),
        m.row_indices().to_vec(),
        m.col_indices().iter().map(|&c| p.forward[c]).collect(),
        m.values().to_vec(),
    ))
}

/// `out[p[i]] = x[i]`.
pub fn permute_vector(x: &[f64], p: &Permutation) -> Result<Vec<f64>, PermutationError> {
    check_size(p.len(), x.len())?;
    let mut out = vec![0.0; x.len()];
    for (&v, &f) in x.iter().zip(&p.forward) {
        out[f] = v;
    }
    Ok(out)
}

/// Index where the binned histogram rises most steeply: the start of bin
/// `i + 1` for the smallest `i` maximizing `h[i + 1] - h[i]`.
pub fn gradient_pivot(h: &BinnedHistogram) -> Result<usize, PermutationError> {
    let counts = h.counts();
    if counts.len() < 2 || h.axes().len() != 1 {
        return Err(PermutationError::TooFewBins(counts.len()));
    }
    let mut best = 0;
    let mut best_grad = i128::MIN;
    for (i, w) in counts.windows(2).enumerate() {
        let grad = w[1] as i128 - w[0] as i128;
        if grad > best_grad {
            best = i;
            best_grad = grad;
        }
    }
    Ok(h.axes()[0].bin_start(best + 1))
}

fn riffle_with(
    n: usize,
    pivot: usize,
    mut local: impl FnMut(&mut [usize]),
) -> Result<Vec<usize>, PermutationError> {
    if pivot == 0 || pivot >= n {
        return Err(PermutationError::PivotOutOfRange { pivot, n });
    }
    let mut low: Vec<usize> = (0..pivot).collect();
    let mut high: Vec<usize> = (pivot..n).collect();
    local(&mut low);
    local(&mut high);
    let mut order = Vec::with_capacity(n);
    let (mut a, mut b) = (low.into_iter(), high.into_iter());
    loop {
        match (a.next(), b.next()) {
            (None, None) => break,
            (x, y) => order.extend(x.into_iter().chain(y)),
        }
    }
    Ok(order)
}

/// Riffle order for `0..n` split at `pivot`: each half is shuffled locally,
/// then output positions alternate low, high, low, high, ... with the longer
/// half's remainder appended. Entry `k` is the source index of position `k`.
pub fn riffle_order(n: usize, pivot: usize, seed: u64) -> Result<Vec<usize>, PermutationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    riffle_with(n, pivot, |half| fisher_yates(half, &mut rng))
}

/// The permutation that moves each index to its position in [`riffle_order`].
pub fn riffle_shuffle_permutation(n: usize, pivot: usize, seed: u64) -> Result<Permutation, PermutationError> {
    Ok(Permutation { forward: riffle_order(n, pivot, seed)? }.inverse())
}

/// The five strategies, in report table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyKind {
    Regular,
    RowPermute,
    RowGradient,
    ColumnGradient,
    RowColumnPermute,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Regular,
        StrategyKind::RowPermute,
        StrategyKind::RowGradient,
        StrategyKind::ColumnGradient,
        StrategyKind::RowColumnPermute,
    ];

    /// Short CLI code.
    pub fn code(self) -> &'static str {
        match self {
            StrategyKind::Regular => "reg",
            StrategyKind::RowPermute => "r",
            StrategyKind::RowColumnPermute => "rc",
            StrategyKind::RowGradient => "gr",
            StrategyKind::ColumnGradient => "gc",
        }
    }

    /// Heading used in text reports.
    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::Regular => "Regular",
            StrategyKind::RowPermute => "Row-Permute",
            StrategyKind::RowColumnPermute => "Row-Column-Permute",
            StrategyKind::RowGradient => "Row-Gradient",
            StrategyKind::ColumnGradient => "Column-Gradient",
        }
    }

    /// Position in table order, used for tie-breaking.
    pub fn rank(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.code().eq_ignore_ascii_case(s) || k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown strategy `{s}` (expected reg, r, rc, gr or gc)"))
    }
}

/// Which axes the column-gradient strategy reshuffles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnGradientAxes {
    /// Gradient shuffle on rows and on columns.
    #[default]
    Both,
    /// Gradient shuffle on columns only; rows untouched.
    ColumnsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyConfig {
    /// Histogram bins for the gradient pivot, clamped to each dimension.
    pub bins: usize,
    pub column_gradient: ColumnGradientAxes,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig { bins: 512, column_gradient: ColumnGradientAxes::Both }
    }
}

/// Row and column permutations for one strategy draw, plus the gradient
/// pivots that produced them (when a gradient shuffle was used).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyPlan {
    pub rows: Permutation,
    pub cols: Permutation,
    pub row_pivot: Option<usize>,
    pub col_pivot: Option<usize>,
}

impl StrategyPlan {
    /// Applies `(rows, cols)` to `m`.
    pub fn apply(&self, m: &CooMatrix) -> Result<CooMatrix, PermutationError> {
        permute_cols(&permute_rows(m, &self.rows)?, &self.cols)
    }
}

fn gradient_shuffle(
    indices: &[usize],
    extent: usize,
    bins: usize,
    seed: u64,
) -> Result<(Permutation, Option<usize>), PermutationError> {
    if extent < 2 {
        return Ok((Permutation::identity(extent), None));
    }
    let bins = clamp_bins(bins, extent).max(2);
    let h = if indices.is_empty() {
        BinnedHistogram::from_counts(vec![0; bins])?
    } else {
        let axis_matrix = CooMatrix::from_parts_unchecked(
            extent,
            1,
            indices.to_vec(),
            vec![0; indices.len()],
            vec![0.0; indices.len()],
        );
        entropy::row_histogram(&axis_matrix, bins)?
    };
    let pivot = gradient_pivot(&h)?;
    Ok((riffle_shuffle_permutation(extent, pivot, seed)?, Some(pivot)))
}

/// Builds the `(P_r, P_c)` pair for `kind`. Identical inputs give identical
/// plans.
pub fn build_strategy(
    m: &CooMatrix,
    kind: StrategyKind,
    seed: u64,
    config: &StrategyConfig,
) -> Result<StrategyPlan, PermutationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (row_seed, col_seed) = (rng.next_u64(), rng.next_u64());
    let (n_rows, n_cols) = (m.n_rows(), m.n_cols());
    let id_rows = || (Permutation::identity(n_rows), None);
    let id_cols = || (Permutation::identity(n_cols), None);
    let grad_rows = || gradient_shuffle(m.row_indices(), n_rows, config.bins, row_seed);
    let grad_cols = || gradient_shuffle(m.col_indices(), n_cols, config.bins, col_seed);

    let ((rows, row_pivot), (cols, col_pivot)) = match kind {
        StrategyKind::Regular => (id_rows(), id_cols()),
        StrategyKind::RowPermute => ((random_permutation(n_rows, row_seed)?, None), id_cols()),
        StrategyKind::RowColumnPermute => (
            (random_permutation(n_rows, row_seed)?, None),
            (random_permutation(n_cols, col_seed)?, None),
        ),
        StrategyKind::RowGradient => (grad_rows()?, id_cols()),
        StrategyKind::ColumnGradient => match config.column_gradient {
            ColumnGradientAxes::Both => (grad_rows()?, grad_cols()?),
            ColumnGradientAxes::ColumnsOnly => (id_rows(), grad_cols()?),
        },
    };
    Ok(StrategyPlan { rows, cols, row_pivot, col_pivot })
}

fn sample_entropy(
    m: &CooMatrix,
    kind: StrategyKind,
    seed: u64,
    config: &StrategyConfig,
    bins_2d: (usize, usize),
    base: EntropyBase,
) -> Result<f64, PermutationError> {
    let permuted = build_strategy(m, kind, seed, config)?.apply(m)?;
    let h = entropy::histogram_2d(
        &permuted,
        clamp_bins(bins_2d.0, m.n_rows()),
        clamp_bins(bins_2d.1, m.n_cols()),
    )?;
    Ok(base.from_bits(entropy::shannon_entropy(&h)?))
}

/// 2D-binned entropy of `m` after each seeded draw of `kind`, one value per
/// seed in seed order. Draws run on the rayon pool when the `parallel`
/// feature is enabled.
pub fn permuted_entropy_sweep(
    m: &CooMatrix,
    kind: StrategyKind,
    seeds: &[u64],
    config: &StrategyConfig,
    bins_2d: (usize, usize),
    base: EntropyBase,
) -> Result<Vec<f64>, PermutationError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        seeds
            .par_iter()
            .map(|&s| sample_entropy(m, kind, s, config, bins_2d, base))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    permuted_entropy_sweep_sequential(m, kind, seeds, config, bins_2d, base)
}

/// Single-threaded [`permuted_entropy_sweep`].
pub fn permuted_entropy_sweep_sequential(
    m: &CooMatrix,
    kind: StrategyKind,
    seeds: &[u64],
    config: &StrategyConfig,
    bins_2d: (usize, usize),
    base: EntropyBase,
) -> Result<Vec<f64>, PermutationError> {
    seeds.iter().map(|&s| sample_entropy(m, kind, s, config, bins_2d, base)).collect()
}
