//! Detection of sparse matrix signals in Gaussian noise.
//!
//! The crate covers the full workflow: dense matrices with sparse-aware norms,
//! signal priors and noise models, the thresholding and scan detectors for the
//! additive and covariance models, sparse spectral witnesses, chi-square and
//! total-variation bounds for the least-favorable prior, and a reproducible
//! Monte Carlo driver that turns a configuration into a phase table.

pub mod detectors;
pub mod divergence;
pub mod error;
pub mod experiment;
mod linalg;
pub mod io;
pub mod matrix;
pub mod priors;
pub mod rng;
pub mod witness;

pub use error::{Error, Result};
pub use matrix::{DenseMatrix, IndexSet, SingularTriplet, SparsityBudget};
pub use rng::RngSeed;
