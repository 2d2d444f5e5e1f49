//! Identifiability verdicts and empirical condition measures.
//!
//! The incoherence and curvature constants are reported as measured
//! quantities; nothing here gates estimation.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::dataset::{ComparisonDataset, Params, SparsityBudget};

/// Relative singular-value cutoff used for numerical rank.
pub const RANK_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum IdentifiabilityVerdict {
    Identifiable,
    /// `d >= n`.
    TooManyCovariates {
        n: usize,
        d: usize,
    },
    /// `2k + d + 1 > n`.
    SparsityTooLarge {
        required: usize,
        n: usize,
    },
    /// `[1 | X]` is rank deficient.
    DegenerateDesign {
        rank: usize,
        expected: usize,
    },
}

impl IdentifiabilityVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, IdentifiabilityVerdict::Identifiable)
    }
}

/// `[1 | X]`.
pub fn augmented_design(covariates: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = covariates.shape();
    DMatrix::from_fn(n, d + 1, |r, c| if c == 0 { 1.0 } else { covariates[(r, c - 1)] })
}

/// Numerical rank with cutoff `rtol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rtol * max).count()
}

pub fn check_identifiability(budget: SparsityBudget, covariates: &DMatrix<f64>) -> IdentifiabilityVerdict {
    let (n, d) = covariates.shape();
    if d >= n {
        return IdentifiabilityVerdict::TooManyCovariates { n, d };
    }
    let required = 2 * budget.k + d + 1;
    if required > n {
        return IdentifiabilityVerdict::SparsityTooLarge { required, n };
    }
    let rank = numerical_rank(&augmented_design(covariates), RANK_RTOL);
    if rank < d + 1 {
        return IdentifiabilityVerdict::DegenerateDesign { rank, expected: d + 1 };
    }
    IdentifiabilityVerdict::Identifiable
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDiagnostics {
    /// `exp(max_i theta_i - min_j theta_j)`.
    pub kappa1: f64,
    /// `max_i |alpha_i|`.
    pub kappa2: f64,
    /// `|(alpha, beta)|_2 / sqrt(n)`.
    pub kappa3: f64,
    /// Largest row norm of the projection onto `col([1 | X])`, in units of
    /// `sqrt((d + 1) / n)`.
    pub incoherence: f64,
    /// Smallest value of `v' S v / |v|^2` over `v` with `[1 | X]' v_alpha = 0`,
    /// where `S` sums `(t_i - t_j)(t_i - t_j)'` over all pairs.
    pub sigma_min_perp: f64,
    /// Operator norm of `S`.
    pub sigma_max: f64,
}

/// `kappa1..kappa3` only; cheap.
pub fn condition_numbers(params: &Params, dataset: &ComparisonDataset) -> (f64, f64, f64) {
    let s = dataset.scores(params);
    let gap = if s.is_empty() { 0.0 } else { s.max() - s.min() };
    let kappa2 = params.alpha.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    let norm = (params.alpha.norm_squared() + params.beta.norm_squared()).sqrt();
    (gap.exp(), kappa2, norm / (dataset.n() as f64).sqrt())
}

/// Sum over all `n (n - 1) / 2` pairs of `(t_i - t_j)(t_i - t_j)'` with
/// `t_i = (e_i, x_i)`; equals `T' (n I - 1 1') T` for `T = [I | X]`.
pub fn all_pairs_gram(covariates: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = covariates.shape();
    let t = DMatrix::from_fn(n, n + d, |r, c| {
        if c < n {
            if r == c {
                1.0
            } else {
                0.0
            }
        } else {
            covariates[(r, c - n)]
        }
    });
    let col_sums = DMatrix::from_fn(1, n + d, |_, c| t.column(c).sum());
    let nf = n as f64;
    let s = t.tr_mul(&t) * nf - col_sums.tr_mul(&col_sums);
    (&s + s.transpose()) * 0.5
}

/// Orthogonal projector onto the column space of `[1 | X]`.
pub(crate) fn design_projector(covariates: &DMatrix<f64>) -> DMatrix<f64> {
    let xbar = augmented_design(covariates);
    let svd = xbar.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let max = svd.singular_values.max();
    let cols: Vec<_> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > RANK_RTOL * max)
        .map(|(k, _)| u.column(k).into_owned())
        .collect();
    let n = covariates.nrows();
    let mut p = DMatrix::zeros(n, n);
    for c in cols {
        p += &c * c.transpose();
    }
    p
}

pub fn compute_diagnostics(params: &Params, dataset: &ComparisonDataset) -> ModelDiagnostics {
    let (kappa1, kappa2, kappa3) = condition_numbers(params, dataset);
    let n = dataset.n();
    let d = dataset.d();
    let x = dataset.covariates();

    let proj = design_projector(x);
    let max_row = proj.row_iter().map(|r| r.norm()).fold(0.0_f64, f64::max);
    let incoherence = max_row * (n as f64 / (d + 1) as f64).sqrt();

    let sigma = all_pairs_gram(x);
    // P = blockdiag(I - proj, I_d) projects onto { v : [1|X]' v_alpha = 0 }.
    let mut p = DMatrix::identity(n + d, n + d);
    p.view_mut((0, 0), (n, n)).copy_from(&(DMatrix::identity(n, n) - &proj));
    let psp = &p * &sigma * &p;
    let psp = (&psp + psp.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(psp).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    // The complement of the constrained subspace has dimension d + 1 and
    // contributes exact zeros at the bottom of the spectrum.
    let sigma_min_perp = eig.get(d + 1).copied().unwrap_or(0.0).max(0.0);
    let sigma_max = SymmetricEigen::new(sigma).eigenvalues.max();

    ModelDiagnostics { kappa1, kappa2, kappa3, incoherence, sigma_min_perp, sigma_max }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn generic(n: usize, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |r, c| ((r * 31 + c * 17 + r * r * c) % 23) as f64 / 23.0 - 0.5)
    }

    #[test]
    fn verdicts() {
        assert!(check_identifiability(SparsityBudget { k: 3 }, &generic(10, 2)).passed());
        assert_eq!(
            check_identifiability(SparsityBudget { k: 2 }, &generic(6, 2)),
            IdentifiabilityVerdict::SparsityTooLarge { required: 7, n: 6 }
        );
        let mut x = generic(10, 2);
        x.column_mut(1).fill(0.3);
        assert!(matches!(
            check_identifiability(SparsityBudget { k: 1 }, &x),
            IdentifiabilityVerdict::DegenerateDesign { rank: 2, expected: 3 }
        ));
    }

    #[test]
    fn condition_numbers_examples() {
        let x = DMatrix::zeros(4, 0);
        let ds = ComparisonDataset::new(x, vec![], None).unwrap();
        let (k1, k2, k3) = condition_numbers(&Params::zeros(4, 0), &ds);
        assert_eq!((k1, k2, k3), (1.0, 0.0, 0.0));
        let p = Params::new(DVector::from_vec(vec![1.0, -1.0, 0.0, 0.0]), DVector::zeros(0)).unwrap();
        let (k1, k2, _) = condition_numbers(&p, &ds);
        assert!((k1 - 2f64.exp()).abs() < 1e-12);
        assert_eq!(k2, 1.0);
    }

    #[test]
    fn no_covariates_incoherence_is_one() {
        let ds = ComparisonDataset::new(DMatrix::zeros(6, 0), vec![], None).unwrap();
        let diag = compute_diagnostics(&Params::zeros(6, 0), &ds);
        assert!((diag.incoherence - 1.0).abs() < 1e-12);
        // Complete-graph Laplacian: every non-constant eigenvalue equals n.
        assert!((diag.sigma_min_perp - 6.0).abs() < 1e-9);
        assert!((diag.sigma_max - 6.0).abs() < 1e-9);
    }
}
