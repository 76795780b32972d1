//! Entropy-guided randomization of sparse matrices for SpMV.
//!
//! The crate reads Matrix Market files ([`matio`]), multiplies in COO, CSR
//! and row-partitioned parallel CSR ([`kernels`]), reshuffles rows and
//! columns with random and gradient-pivoted riffle permutations
//! ([`permute`]), measures how evenly the nonzeros are spread with binned
//! Shannon entropy ([`entropy`]), and times everything under a
//! repeat-and-summarize protocol ([`bench`]).
//!
//! The `parallel` feature (on by default) runs the parallel kernel and the
//! Monte Carlo entropy sweeps on rayon. Without it the same functions run
//! sequentially and produce identical results.

pub mod bench;
pub mod entropy;
pub mod kernels;
pub mod matio;
pub mod permute;

pub use entropy::{BinnedHistogram, EntropyBase, EntropySummary};
pub use kernels::{RowPartition, WorkerMode};
pub use matio::{CooMatrix, CsrMatrix};
pub use permute::{Permutation, StrategyConfig, StrategyKind, StrategyPlan};
