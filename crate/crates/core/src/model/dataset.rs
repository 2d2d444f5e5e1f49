use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed pair. Stored with `i > j`.
///
/// `wins` counts the trials won by item `i` (the larger index), so the
/// sufficient statistic entering the likelihood is `wins / trials`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub wins: u64,
    pub trials: u64,
}

impl Edge {
    /// Builds a canonical edge from an observation of `a` against `b` in
    /// `trials` trials of which `a` won `a_wins`.
    pub fn from_pair(a: usize, b: usize, a_wins: u64, trials: u64) -> Result<Self> {
        if a == b {
            return Err(Error::invalid(format!("self-pair ({a}, {a})")));
        }
        if trials == 0 {
            return Err(Error::invalid(format!("pair ({a}, {b}) has zero trials")));
        }
        if a_wins > trials {
            return Err(Error::invalid(format!("pair ({a}, {b}): {a_wins} wins exceed {trials} trials")));
        }
        Ok(if a > b {
            Edge { i: a, j: b, wins: a_wins, trials }
        } else {
            Edge { i: b, j: a, wins: trials - a_wins, trials }
        })
    }

    /// Fraction of trials won by item `i`.
    #[inline]
    pub fn win_fraction(&self) -> f64 {
        self.wins as f64 / self.trials as f64
    }
}

/// Items, their covariates, and aggregated pairwise outcomes.
///
/// The covariates are stored after rescaling so that every row norm is at
/// most `sqrt((d + 1) / n)`; [`ComparisonDataset::covariate_scale`] is the
/// divisor that was applied to the raw rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonDataset {
    covariates: DMatrix<f64>,
    scale: f64,
    edges: Vec<Edge>,
    l_ref: f64,
}

/// Divides `raw` by the smallest `K >= 1` that brings every row norm within
/// `sqrt((d + 1) / n)`.
pub fn rescale_covariates(raw: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let (n, d) = raw.shape();
    if n == 0 {
        return Err(Error::invalid("covariate matrix has no rows"));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("covariates contain non-finite values"));
    }
    let bound = ((d + 1) as f64 / n as f64).sqrt();
    let max_norm = raw.row_iter().map(|r| r.norm()).fold(0.0_f64, f64::max);
    // Rows already on the target scale (e.g. a previously rescaled file)
    // are left untouched.
    if max_norm <= bound * (1.0 + 1e-12) {
        return Ok((raw.clone(), 1.0));
    }
    let k = max_norm / bound;
    Ok((raw / k, k))
}

impl ComparisonDataset {
    /// Validates and assembles a dataset. `raw_covariates` is `n x d` and is
    /// rescaled on the way in. Edges may be given in any order; they are
    /// sorted into canonical `(i, j)` order. `l_ref` defaults to the mean
    /// trial count.
    pub fn new(raw_covariates: DMatrix<f64>, edges: Vec<Edge>, l_ref: Option<f64>) -> Result<Self> {
        let (n, d) = raw_covariates.shape();
        if d >= n {
            return Err(Error::invalid(format!(
                "covariate dimension d = {d} must be smaller than the item count n = {n}"
            )));
        }
        let (covariates, scale) = rescale_covariates(&raw_covariates)?;
        Self::assemble(covariates, scale, edges, l_ref)
    }

    fn assemble(covariates: DMatrix<f64>, scale: f64, mut edges: Vec<Edge>, l_ref: Option<f64>) -> Result<Self> {
        let n = covariates.nrows();
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.i == e.j {
                return Err(Error::invalid(format!("self-pair ({}, {})", e.i, e.i)));
            }
            if e.i < e.j {
                return Err(Error::invalid(format!("edge ({}, {}) is not in i > j form", e.i, e.j)));
            }
            if e.i >= n {
                return Err(Error::invalid(format!("edge ({}, {}) references item {} but n = {n}", e.i, e.j, e.i)));
            }
            if e.trials == 0 || e.wins > e.trials {
                return Err(Error::invalid(format!(
                    "edge ({}, {}): wins = {}, trials = {}",
                    e.i, e.j, e.wins, e.trials
                )));
            }
            if !seen.insert((e.i, e.j)) {
                return Err(Error::invalid(format!("duplicate edge ({}, {})", e.i, e.j)));
            }
        }
        edges.sort_unstable_by_key(|e| (e.i, e.j));
        let l_ref = match l_ref {
            Some(l) if l.is_finite() && l > 0.0 => l,
            Some(l) => return Err(Error::invalid(format!("reference trial count must be positive, got {l}"))),
            None if edges.is_empty() => 1.0,
            None => edges.iter().map(|e| e.trials).sum::<u64>() as f64 / edges.len() as f64,
        };
        Ok(ComparisonDataset { covariates, scale, edges, l_ref })
    }

    /// Same items and covariates, different outcomes.
    pub fn with_edges(&self, edges: Vec<Edge>, l_ref: Option<f64>) -> Result<Self> {
        Self::assemble(self.covariates.clone(), self.scale, edges, l_ref)
    }

    /// Keeps the items in `keep` (ascending original indices), renumbered
    /// `0..keep.len()`, together with every edge between them.
    pub(crate) fn restrict(&self, keep: &[usize]) -> Result<(Self, Vec<Option<usize>>)> {
        let mut map = vec![None; self.n()];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = Some(new);
        }
        let d = self.d();
        let covariates = DMatrix::from_fn(keep.len(), d, |r, c| self.covariates[(keep[r], c)]);
        let edges = self
            .edges
            .iter()
            .filter_map(|e| match (map[e.i], map[e.j]) {
                (Some(i), Some(j)) => Some(Edge { i, j, ..*e }),
                _ => None,
            })
            .collect();
        let restricted = Self::assemble(covariates, self.scale, edges, Some(self.l_ref))?;
        Ok((restricted, map))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.covariates.nrows()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.covariates.ncols()
    }

    /// Length of the full parameter vector, `n + d`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.n() + self.d()
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    /// Divisor applied to the raw covariates.
    pub fn covariate_scale(&self) -> f64 {
        self.scale
    }

    /// Puts new (raw-unit) covariates on the same scale as the stored ones.
    pub fn scale_new_covariates(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if raw.ncols() != self.d() {
            return Err(Error::invalid(format!("new covariates have {} columns, expected {}", raw.ncols(), self.d())));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("new covariates contain non-finite values"));
        }
        Ok(raw / self.scale)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn l_ref(&self) -> f64 {
        self.l_ref
    }

    /// Edge weight `trials / l_ref`; exactly 1 for homogeneous data.
    #[inline]
    pub fn weight(&self, e: &Edge) -> f64 {
        e.trials as f64 / self.l_ref
    }

    pub fn is_homogeneous(&self) -> bool {
        self.edges.windows(2).all(|w| w[0].trials == w[1].trials)
    }

    /// Observed edge density `2|E| / (n (n - 1))`.
    pub fn edge_density(&self) -> f64 {
        let n = self.n() as f64;
        2.0 * self.edges.len() as f64 / (n * (n - 1.0))
    }

    /// Per-item scores `alpha + X beta`.
    pub fn scores(&self, params: &Params) -> DVector<f64> {
        &params.alpha + &self.covariates * &params.beta
    }

    /// Number of edges touching each item.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n()];
        for e in &self.edges {
            deg[e.i] += 1;
            deg[e.j] += 1;
        }
        deg
    }
}

/// Intrinsic scores `alpha` (length n) and covariate coefficients `beta`
/// (length d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    #[serde(with = "crate::flat::vector")]
    pub alpha: DVector<f64>,
    #[serde(with = "crate::flat::vector")]
    pub beta: DVector<f64>,
}

impl Params {
    pub fn zeros(n: usize, d: usize) -> Self {
        Params { alpha: DVector::zeros(n), beta: DVector::zeros(d) }
    }

    pub fn new(alpha: DVector<f64>, beta: DVector<f64>) -> Result<Self> {
        let p = Params { alpha, beta };
        if !p.is_finite() {
            return Err(Error::invalid("parameters contain non-finite values"));
        }
        Ok(p)
    }

    /// Splits a stacked `(alpha, beta)` vector.
    pub fn from_stacked(theta: &DVector<f64>, n: usize) -> Self {
        let d = theta.len() - n;
        Params { alpha: theta.rows(0, n).into_owned(), beta: theta.rows(n, d).into_owned() }
    }

    pub fn stacked(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.alpha.len() + self.beta.len());
        v.rows_mut(0, self.alpha.len()).copy_from(&self.alpha);
        v.rows_mut(self.alpha.len(), self.beta.len()).copy_from(&self.beta);
        v
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn d(&self) -> usize {
        self.beta.len()
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.iter().chain(self.beta.iter()).all(|v| v.is_finite())
    }

    /// Indices with a nonzero intrinsic score.
    pub fn support(&self) -> Vec<usize> {
        self.alpha.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(i, _)| i).collect()
    }

    /// `alpha_i + x_i' beta`.
    pub fn score(&self, dataset: &ComparisonDataset, i: usize) -> f64 {
        self.alpha[i] + dataset.covariates().row(i).transpose().dot(&self.beta)
    }
}

/// Upper bound `k` on the number of nonzero intrinsic scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityBudget {
    pub k: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rescale_zero_matrix_is_identity() {
        let raw = DMatrix::zeros(5, 2);
        let (x, k) = rescale_covariates(&raw).unwrap();
        assert_eq!(x, raw);
        assert_eq!(k, 1.0);
    }

    #[test]
    fn rescale_single_entry() {
        let mut raw = DMatrix::zeros(4, 1);
        raw[(2, 0)] = 2.0;
        let (x, k) = rescale_covariates(&raw).unwrap();
        let bound = 0.5_f64.sqrt();
        assert!((x[(2, 0)] - bound).abs() < 1e-15);
        assert!((k - 2.0 / bound).abs() < 1e-12);
    }

    #[test]
    fn rescale_random_hits_bound() {
        let raw = DMatrix::from_fn(10, 3, |r, c| ((r * 7 + c * 3) % 11) as f64 - 4.3);
        let (x, _) = rescale_covariates(&raw).unwrap();
        let max = x.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
        assert!((max - 0.4_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rescale_rejects_nan() {
        let mut raw = DMatrix::zeros(3, 1);
        raw[(0, 0)] = f64::NAN;
        assert!(rescale_covariates(&raw).is_err());
    }

    #[test]
    fn edge_canonicalisation() {
        let e = Edge::from_pair(1, 2, 3, 5).unwrap();
        assert_eq!(e, Edge { i: 2, j: 1, wins: 2, trials: 5 });
        assert!(Edge::from_pair(1, 1, 0, 1).is_err());
        assert!(Edge::from_pair(1, 0, 6, 5).is_err());
    }

    #[test]
    fn dataset_rejects_duplicates_and_large_d() {
        let x = DMatrix::zeros(3, 1);
        let e = Edge { i: 1, j: 0, wins: 1, trials: 2 };
        assert!(ComparisonDataset::new(x.clone(), vec![e, e], None).is_err());
        assert!(ComparisonDataset::new(DMatrix::zeros(2, 2), vec![], None).is_err());
        let ds = ComparisonDataset::new(x, vec![e], None).unwrap();
        assert_eq!(ds.l_ref(), 2.0);
        assert_eq!(ds.weight(&ds.edges()[0]), 1.0);
    }

    #[test]
    fn support_is_exact() {
        let p = Params::new(DVector::from_vec(vec![0.0, 1e-300, -0.0, 2.0]), DVector::zeros(0)).unwrap();
        assert_eq!(p.support(), vec![1, 3]);
    }
}
