//! The BTL model with covariates: data, parameters, likelihood, diagnostics.

mod dataset;
mod diagnostics;
mod likelihood;

pub use dataset::{rescale_covariates, ComparisonDataset, Edge, Params, SparsityBudget};
pub use diagnostics::{
    all_pairs_gram, augmented_design, check_identifiability, compute_diagnostics, condition_numbers, numerical_rank,
    IdentifiabilityVerdict, ModelDiagnostics, RANK_RTOL,
};
pub use likelihood::{
    btl_prob, edge_curvatures, edge_gaps, gradient, hessian, hessian_spectral_norm, logistic, logistic_slope, loss,
    loss_and_gradient, regularized_loss, softplus, HessianBlocks,
};

pub(crate) use likelihood::{check_penalties, penalty};
