use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    augmented_design, hessian, loss, loss_and_gradient, numerical_rank, ComparisonDataset, Params, RANK_RTOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitResult {
    /// Full-length parameters, exact zeros off the support.
    pub params: Params,
    pub support: Vec<usize>,
    pub iterations: usize,
    /// Gradient norm over the free coordinates.
    pub gradient_norm: f64,
    /// Ridge added to the restricted Hessian, if the first attempt failed.
    pub ridge: f64,
}

const GRAD_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 100;
const FALLBACK_RIDGE: f64 = 1e-8;

/// Free coordinates in the stacked parameter vector.
fn free_coordinates(support: &[usize], n: usize, d: usize) -> Vec<usize> {
    support.iter().copied().chain(n..n + d).collect()
}

fn embed(free: &[usize], gamma: &DVector<f64>, n: usize, d: usize) -> Params {
    let mut theta = DVector::zeros(n + d);
    for (k, &c) in free.iter().enumerate() {
        theta[c] = gamma[k];
    }
    Params::from_stacked(&theta, n)
}

/// Unpenalised MLE over `(alpha_S, beta)` with `alpha` held at zero off
/// `support`, by damped Newton with Armijo backtracking.
pub fn two_stage_refit(dataset: &ComparisonDataset, support: &[usize]) -> Result<RefitResult> {
    let n = dataset.n();
    let d = dataset.d();
    let mut support = support.to_vec();
    support.sort_unstable();
    support.dedup();
    if let Some(&bad) = support.iter().find(|&&i| i >= n) {
        return Err(Error::invalid(format!("support index {bad} out of range for n = {n}")));
    }
    // The restricted model is identified iff [1 | X] restricted to the
    // off-support rows has full column rank.
    let off: Vec<usize> = (0..n).filter(|i| support.binary_search(i).is_err()).collect();
    let xbar = augmented_design(dataset.covariates());
    let off_rows = DMatrix::from_fn(off.len(), d + 1, |r, c| xbar[(off[r], c)]);
    if off.len() < d + 1 || numerical_rank(&off_rows, RANK_RTOL) < d + 1 {
        return Err(Error::Refit(format!(
            "restricted model with |S| = {} is not identifiable: off-support design has rank < {}",
            support.len(),
            d + 1
        )));
    }

    match newton(dataset, &support, 0.0) {
        Ok(r) => Ok(r),
        Err(Error::Refit(first)) => newton(dataset, &support, FALLBACK_RIDGE)
            .map_err(|e| Error::Refit(format!("{first}; retry with ridge {FALLBACK_RIDGE:e} also failed: {e}"))),
        Err(e) => Err(e),
    }
}

fn newton(dataset: &ComparisonDataset, support: &[usize], ridge: f64) -> Result<RefitResult> {
    let n = dataset.n();
    let d = dataset.d();
    let free = free_coordinates(support, n, d);
    let m = free.len();
    let mut gamma = DVector::zeros(m);
    let mut params = embed(&free, &gamma, n, d);
    let objective = |p: &Params, g: &DVector<f64>| loss(p, dataset) + 0.5 * ridge * g.norm_squared();

    for iteration in 0..=MAX_NEWTON {
        let (value, full_grad) = loss_and_gradient(&params, dataset);
        let value = value + 0.5 * ridge * gamma.norm_squared();
        let grad = DVector::from_fn(m, |k, _| full_grad[free[k]]) + &gamma * ridge;
        let gnorm = grad.norm();
        if gnorm <= GRAD_TOL {
            return Ok(RefitResult {
                params,
                support: support.to_vec(),
                iterations: iteration,
                gradient_norm: gnorm,
                ridge,
            });
        }
        if iteration == MAX_NEWTON {
            break;
        }
        let h_full = hessian(&params, dataset);
        let mut h = DMatrix::from_fn(m, m, |a, b| h_full[(free[a], free[b])]);
        for k in 0..m {
            h[(k, k)] += ridge;
        }
        let chol = h.cholesky().ok_or_else(|| Error::Refit("restricted Hessian is singular".into()))?;
        let step = chol.solve(&grad);
        let slope = grad.dot(&step);
        let mut t = 1.0;
        loop {
            let trial = &gamma - &step * t;
            let trial_params = embed(&free, &trial, n, d);
            let trial_value = objective(&trial_params, &trial);
            if trial_value <= value - 1e-4 * t * slope || t < 1e-12 {
                gamma = trial;
                params = trial_params;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::Refit(format!("no convergence in {MAX_NEWTON} Newton steps")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ComparisonGraph;
    use crate::model::{gradient, Edge};

    fn dataset() -> ComparisonDataset {
        let n = 8;
        let x = DMatrix::from_fn(n, 1, |r, _| ((r * 5) % 8) as f64 / 8.0 - 0.4);
        let edges = ComparisonGraph::complete(n)
            .edges
            .into_iter()
            .enumerate()
            .map(|(k, (i, j))| Edge { i, j, wins: 1 + (k % 4) as u64, trials: 6 })
            .collect();
        ComparisonDataset::new(x, edges, None).unwrap()
    }

    #[test]
    fn empty_support_is_covariate_only_mle() {
        let ds = dataset();
        let r = two_stage_refit(&ds, &[]).unwrap();
        assert!(r.params.alpha.iter().all(|a| *a == 0.0));
        let g = gradient(&r.params, &ds);
        assert!(g.rows(ds.n(), ds.d()).norm() <= 1e-8);
    }

    #[test]
    fn support_refit_is_stationary_on_free_coordinates() {
        let ds = dataset();
        let r = two_stage_refit(&ds, &[2, 5]).unwrap();
        let g = gradient(&r.params, &ds);
        assert!(g[2].abs() <= 1e-8 && g[5].abs() <= 1e-8);
        assert!(g.rows(ds.n(), ds.d()).norm() <= 1e-8);
        for i in [0, 1, 3, 4, 6, 7] {
            assert_eq!(r.params.alpha[i], 0.0);
        }
    }

    #[test]
    fn full_support_is_rejected() {
        let ds = dataset();
        let all: Vec<usize> = (0..ds.n()).collect();
        assert!(matches!(two_stage_refit(&ds, &all), Err(Error::Refit(_))));
        assert!(two_stage_refit(&ds, &[99]).is_err());
    }
}
