use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{gradient, ComparisonDataset, HessianBlocks, Params};
use crate::solver::FitResult;

/// One-step corrected intrinsic scores and the curvature terms needed to
/// standardise them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasedScores {
    /// `alpha_i - (grad loss)_i / (hess loss)_ii` at the penalised fit.
    #[serde(with = "crate::flat::vector")]
    pub alpha_debiased: DVector<f64>,
    /// `(hess loss)_ii`, `i < n`.
    #[serde(with = "crate::flat::vector")]
    pub hessian_diag: DVector<f64>,
    /// Covariate coefficients of the fit, unchanged.
    #[serde(with = "crate::flat::vector")]
    pub beta: DVector<f64>,
    /// Diagonal of the inverse covariate block of the Hessian.
    #[serde(with = "crate::flat::vector")]
    pub a_inv_diag: DVector<f64>,
    pub l_ref: f64,
}

impl DebiasedScores {
    /// `sqrt(H_ii L) * (alpha_debiased_i - reference_i)`.
    ///
    /// `L` is the dataset's reference trial count. Edge weights are
    /// `L_ij / L_ref`, so this scale stays exact when trial counts differ
    /// between pairs.
    pub fn standardized(&self, i: usize, reference: f64) -> f64 {
        (self.hessian_diag[i] * self.l_ref).sqrt() * (self.alpha_debiased[i] - reference)
    }

    /// `sqrt(L) (beta_k - reference) / sqrt((A^-1)_kk)`.
    pub fn standardized_beta(&self, k: usize, reference: f64) -> f64 {
        self.l_ref.sqrt() * (self.beta[k] - reference) / self.a_inv_diag[k].sqrt()
    }
}

/// Inverse of the covariate block of the Hessian.
pub(crate) fn beta_block_inverse(blocks: &HessianBlocks) -> Result<DMatrix<f64>> {
    let d = blocks.beta_block.nrows();
    if d == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let chol = blocks
        .beta_block
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Inference("covariate block of the Hessian is singular".into()))?;
    Ok(chol.inverse())
}

pub(crate) fn check_diag(blocks: &HessianBlocks) -> Result<()> {
    if let Some(i) = blocks.diag.iter().position(|v| v.is_nan() || *v <= 0.0) {
        return Err(Error::Inference(format!(
            "Hessian diagonal vanishes at item {i}; the item has no usable comparisons"
        )));
    }
    Ok(())
}

/// Inference needs a stationary point; a fit stopped by the iteration cap
/// is refused.
pub(crate) fn require_converged(fit: &FitResult) -> Result<()> {
    if fit.converged {
        return Ok(());
    }
    Err(Error::Solver {
        message: format!(
            "fit stopped after {} iterations with residual {:.3e} above {:.3e}; inference needs a converged fit",
            fit.iterations, fit.residual, fit.tolerance
        ),
        step_size: fit.step_size,
    })
}

pub fn debias_alpha(fit: &FitResult, dataset: &ComparisonDataset) -> Result<DebiasedScores> {
    require_converged(fit)?;
    debias_at(&fit.params, dataset)
}

pub(crate) fn debias_at(params: &Params, dataset: &ComparisonDataset) -> Result<DebiasedScores> {
    let n = dataset.n();
    let blocks = HessianBlocks::new(params, dataset);
    check_diag(&blocks)?;
    let g = gradient(params, dataset);
    let alpha_debiased = DVector::from_fn(n, |i, _| params.alpha[i] - g[i] / blocks.diag[i]);
    let a_inv = beta_block_inverse(&blocks)?;
    Ok(DebiasedScores {
        alpha_debiased,
        hessian_diag: blocks.diag,
        beta: params.beta.clone(),
        a_inv_diag: a_inv.diagonal(),
        l_ref: dataset.l_ref(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ComparisonGraph;
    use crate::model::{logistic, Edge};
    use crate::solver::{fit, FitConfig};

    #[test]
    fn unpenalised_stationary_fit_is_unchanged() {
        // No covariates, three items, an interior MLE.
        let edges = ComparisonGraph::complete(3)
            .edges
            .into_iter()
            .zip([3u64, 5, 4])
            .map(|((i, j), w)| Edge { i, j, wins: w, trials: 8 })
            .collect();
        let ds = ComparisonDataset::new(DMatrix::zeros(3, 0), edges, None).unwrap();
        let r = fit(&ds, &FitConfig { grad_tol: Some(1e-13), ..FitConfig::new(0.0, 0.0) }).unwrap();
        let db = debias_alpha(&r, &ds).unwrap();
        assert!((db.alpha_debiased - &r.params.alpha).amax() < 1e-12);
    }

    #[test]
    fn unconverged_fit_is_refused() {
        let edges =
            ComparisonGraph::complete(3).edges.into_iter().map(|(i, j)| Edge { i, j, wins: 3, trials: 8 }).collect();
        let ds = ComparisonDataset::new(DMatrix::zeros(3, 0), edges, None).unwrap();
        let r = fit(&ds, &FitConfig { max_iter: 1, grad_tol: Some(1e-14), ..FitConfig::new(0.0, 0.0) }).unwrap();
        assert!(!r.converged);
        let err = debias_alpha(&r, &ds).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn isolated_item_is_an_error() {
        let e = vec![Edge { i: 1, j: 0, wins: 1, trials: 2 }];
        let ds = ComparisonDataset::new(DMatrix::zeros(3, 0), e, None).unwrap();
        assert!(matches!(debias_at(&Params::zeros(3, 0), &ds), Err(Error::Inference(_))));
    }

    #[test]
    fn single_entry_matches_ratio() {
        let e = vec![Edge { i: 1, j: 0, wins: 3, trials: 4 }, Edge { i: 2, j: 1, wins: 1, trials: 4 }];
        let ds = ComparisonDataset::new(DMatrix::zeros(3, 0), e, None).unwrap();
        let p = Params::new(DVector::from_vec(vec![0.2, 0.0, -0.1]), DVector::zeros(0)).unwrap();
        let db = debias_at(&p, &ds).unwrap();
        // Item 0 sits only on edge (1, 0): grad_0 = -(phi(d) - 3/4), H_00 = phi'(d).
        let d = 0.0 - 0.2;
        let phi = logistic(d);
        let expected = 0.2 + (phi - 0.75) / (phi * (1.0 - phi));
        assert!((db.alpha_debiased[0] - expected).abs() < 1e-14);
    }
}
