//! Test of the covariate-only model, `alpha = 0`.

use serde::{Deserialize, Serialize};

use super::bootstrap::{monte_carlo_p_value, BootstrapSpec, ResidualBasis};
use super::debias::{debias_at, require_converged, DebiasedScores};
use crate::error::Result;
use crate::model::ComparisonDataset;
use crate::solver::FitResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub replicates: usize,
    pub alpha_level: f64,
    pub seed: u64,
    /// Item attaining the maximum standardised score.
    pub argmax: usize,
}

/// `max_i sqrt(H_ii L) |alpha_debiased_i|` with its maximiser.
pub fn gof_statistic_with_argmax(debiased: &DebiasedScores) -> (f64, usize) {
    let mut best = (0.0, 0);
    for i in 0..debiased.alpha_debiased.len() {
        let v = debiased.standardized(i, 0.0).abs();
        if v > best.0 {
            best = (v, i);
        }
    }
    best
}

pub fn gof_statistic(debiased: &DebiasedScores) -> f64 {
    gof_statistic_with_argmax(debiased).0
}

/// Bootstrap replicates of `max_i |g*_i| sqrt(L / H_ii)` and their
/// `1 - alpha` quantile.
pub fn gof_bootstrap(fit: &FitResult, dataset: &ComparisonDataset, spec: &BootstrapSpec) -> Result<(f64, Vec<f64>)> {
    require_converged(fit)?;
    spec.validate()?;
    let debiased = debias_at(&fit.params, dataset)?;
    let reps = gof_replicates(&debiased, &ResidualBasis::new(&fit.params, dataset), spec);
    Ok((spec.critical_value(&reps), reps))
}

fn gof_replicates(debiased: &DebiasedScores, basis: &ResidualBasis, spec: &BootstrapSpec) -> Vec<f64> {
    let scale: Vec<f64> = debiased.hessian_diag.iter().map(|h| (basis.l_ref() / h).sqrt()).collect();
    basis.replicate(spec, |g| g.iter().zip(&scale).fold(0.0f64, |m, (gi, s)| m.max((gi * s).abs())))
}

pub fn gof_test(fit: &FitResult, dataset: &ComparisonDataset, spec: &BootstrapSpec) -> Result<GofReport> {
    require_converged(fit)?;
    gof_test_unchecked(fit, dataset, spec)
}

pub(crate) fn gof_test_unchecked(
    fit: &FitResult,
    dataset: &ComparisonDataset,
    spec: &BootstrapSpec,
) -> Result<GofReport> {
    spec.validate()?;
    let debiased = debias_at(&fit.params, dataset)?;
    let (statistic, argmax) = gof_statistic_with_argmax(&debiased);
    let reps = gof_replicates(&debiased, &ResidualBasis::new(&fit.params, dataset), spec);
    let critical_value = spec.critical_value(&reps);
    Ok(GofReport {
        statistic,
        critical_value,
        p_value: monte_carlo_p_value(statistic, &reps),
        reject: statistic > critical_value,
        replicates: spec.b,
        alpha_level: spec.alpha_level,
        seed: spec.seed,
        argmax,
    })
}
