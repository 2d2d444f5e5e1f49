//! Sparse covariate-assisted Bradley-Terry-Luce ranking.
//!
//! Items carry covariates `x_i` and a sparse intrinsic score `alpha_i`; the
//! probability that `j` beats `i` is `phi(theta_j - theta_i)` with
//! `theta_i = alpha_i + x_i' beta` and `phi` the logistic function.
//!
//! * [`model`]: data, likelihood, derivatives, diagnostics.
//! * [`graph`]: Erdos-Renyi comparison graphs and connectivity.
//! * [`solver`]: proximal gradient for the penalised MLE, support refit.
//! * [`inference`]: debiasing, multiplier bootstrap, goodness-of-fit and
//!   rank confidence intervals.
//! * [`simulate`]: synthetic scenarios and Monte Carlo drivers.
//! * [`io`]: CSV datasets, key=value configs, JSON reports.

pub mod error;
mod flat;
pub mod graph;
pub mod inference;
pub mod io;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
pub use model::{ComparisonDataset, Edge, Params, SparsityBudget};
pub use solver::{FitConfig, FitResult};
