//! Simultaneous confidence intervals for score differences and ranks of
//! items under new covariates `Z`.
//!
//! Item `m` is predicted as `theta_m = alpha_m + z_m' beta`, where `alpha` is
//! the debiased estimate (one stage) or the support refit (two stage). With
//! `u_i = (mask_i e_i, z_i)` and `M` the block-diagonal map
//! `diag(H_aa)^-1 (+) A^-1`, the difference `theta_m - theta_k` has
//! standard error `sigma_mk = sqrt(v' H v / L)`, `v = M (u_m - u_k)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bootstrap::{BootstrapSpec, ResidualBasis};
use super::debias::{beta_block_inverse, check_diag, require_converged};
use crate::error::{Error, Result};
use crate::model::{gradient, ComparisonDataset, HessianBlocks, Params};
use crate::solver::{FitResult, RefitResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    OneStage,
    TwoStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    TwoSided,
    OneSidedLower,
}

/// Rank interval `[lower, upper]`; rank 1 is the highest score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankInterval {
    pub item: usize,
    pub lower: usize,
    pub upper: usize,
    pub kind: IntervalKind,
}

impl RankInterval {
    pub fn contains(&self, rank: usize) -> bool {
        self.lower <= rank && rank <= self.upper
    }

    pub fn length(&self) -> usize {
        self.upper - self.lower
    }
}

/// Interval for `theta_k - theta_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseInterval {
    pub k: usize,
    pub m: usize,
    pub estimate: f64,
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Everything needed to form standardised score differences at a fit.
#[derive(Debug, Clone)]
pub struct ScoreModel {
    stage: Stage,
    theta: DVector<f64>,
    mask: Vec<bool>,
    blocks: HessianBlocks,
    /// Row `i` is `A^-1 z_i`.
    w: DMatrix<f64>,
    z: DMatrix<f64>,
    /// Design `X` of the fitted data, maps item scores to the beta block.
    x: DMatrix<f64>,
    basis: ResidualBasis,
    l_ref: f64,
}

fn check_z(z: &DMatrix<f64>, dataset: &ComparisonDataset) -> Result<()> {
    if z.nrows() != dataset.n() || z.ncols() != dataset.d() {
        return Err(Error::invalid(format!(
            "new covariates are {}x{}, expected {}x{}",
            z.nrows(),
            z.ncols(),
            dataset.n(),
            dataset.d()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("new covariates contain non-finite entries"));
    }
    Ok(())
}

impl ScoreModel {
    /// Debiased penalised fit. `z` is on the internal covariate scale, see
    /// [`ComparisonDataset::scale_new_covariates`]; `None` reuses `X`.
    pub fn one_stage(dataset: &ComparisonDataset, fit: &FitResult, z: Option<&DMatrix<f64>>) -> Result<Self> {
        require_converged(fit)?;
        Self::one_stage_unchecked(dataset, fit, z)
    }

    pub(crate) fn one_stage_unchecked(
        dataset: &ComparisonDataset,
        fit: &FitResult,
        z: Option<&DMatrix<f64>>,
    ) -> Result<Self> {
        let params = &fit.params;
        let blocks = HessianBlocks::new(params, dataset);
        check_diag(&blocks)?;
        let g = gradient(params, dataset);
        let alpha = DVector::from_fn(dataset.n(), |i, _| params.alpha[i] - g[i] / blocks.diag[i]);
        Self::build(Stage::OneStage, dataset, params, alpha, vec![true; dataset.n()], blocks, z)
    }

    /// Support refit; items off the support carry no intrinsic term.
    pub fn two_stage(dataset: &ComparisonDataset, refit: &RefitResult, z: Option<&DMatrix<f64>>) -> Result<Self> {
        let params = &refit.params;
        let blocks = HessianBlocks::new(params, dataset);
        check_diag(&blocks)?;
        let mut mask = vec![false; dataset.n()];
        for &i in &refit.support {
            mask[i] = true;
        }
        Self::build(Stage::TwoStage, dataset, params, params.alpha.clone(), mask, blocks, z)
    }

    fn build(
        stage: Stage,
        dataset: &ComparisonDataset,
        params: &Params,
        alpha: DVector<f64>,
        mask: Vec<bool>,
        blocks: HessianBlocks,
        z: Option<&DMatrix<f64>>,
    ) -> Result<Self> {
        let z = match z {
            Some(z) => {
                check_z(z, dataset)?;
                z.clone()
            }
            None => dataset.covariates().clone(),
        };
        let a_inv = beta_block_inverse(&blocks)?;
        let w = &z * &a_inv;
        let zb = &z * &params.beta;
        let theta = DVector::from_fn(dataset.n(), |i, _| (if mask[i] { alpha[i] } else { 0.0 }) + zb[i]);
        Ok(ScoreModel {
            stage,
            theta,
            mask,
            blocks,
            w,
            z,
            x: dataset.covariates().clone(),
            basis: ResidualBasis::new(params, dataset),
            l_ref: dataset.l_ref(),
        })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    /// Predicted scores `theta_i`.
    pub fn scores(&self) -> &DVector<f64> {
        &self.theta
    }

    fn alpha_coef(&self, i: usize) -> f64 {
        if self.mask[i] {
            1.0 / self.blocks.diag[i]
        } else {
            0.0
        }
    }

    /// Standard error of `theta_m - theta_k`.
    pub fn sigma_hat(&self, m: usize, k: usize) -> Result<f64> {
        let n = self.n();
        if m >= n || k >= n {
            return Err(Error::invalid(format!("item index out of range for n = {n}")));
        }
        if m == k {
            return Err(Error::invalid("sigma_hat needs two distinct items"));
        }
        Ok(self.sigma_unchecked(m, k))
    }

    fn sigma_unchecked(&self, m: usize, k: usize) -> f64 {
        let am = self.alpha_coef(m);
        let ak = -self.alpha_coef(k);
        let d = self.z.ncols();
        let mut quad = am * am * self.blocks.diag[m]
            + ak * ak * self.blocks.diag[k]
            + 2.0 * am * ak * self.blocks.item_entry(m, k);
        for c in 0..d {
            let vb = self.w[(m, c)] - self.w[(k, c)];
            quad += 2.0 * (am * self.blocks.cross[(m, c)] + ak * self.blocks.cross[(k, c)]) * vb;
            quad += (self.z[(m, c)] - self.z[(k, c)]) * vb;
        }
        (quad.max(0.0) / self.l_ref).sqrt()
    }

    /// `sigma[(r, k)]` for `m = items[r]`; the diagonal entry is unused.
    fn sigma_table(&self, items: &[usize]) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(items.len(), n, |r, k| if items[r] == k { 1.0 } else { self.sigma_unchecked(items[r], k) })
    }

    /// Bootstrap replicates of the max standardised difference over
    /// `m in items`, `k != m`.
    fn replicates(&self, items: &[usize], sigma: &DMatrix<f64>, kind: IntervalKind, spec: &BootstrapSpec) -> Vec<f64> {
        let n = self.n();
        self.basis.replicate(spec, |g| {
            let gb = self.x.tr_mul(g);
            let q = DVector::from_fn(n, |i, _| self.alpha_coef(i) * g[i] + self.w.row(i).transpose().dot(&gb));
            let mut best = f64::NEG_INFINITY;
            for (r, &m) in items.iter().enumerate() {
                for k in 0..n {
                    if k == m {
                        continue;
                    }
                    // A zero standard error means the difference is
                    // degenerate and carries no noise.
                    let s = sigma[(r, k)];
                    let t = if s > 0.0 { (q[m] - q[k]) / s } else { 0.0 };
                    let t = match kind {
                        IntervalKind::TwoSided => t.abs(),
                        IntervalKind::OneSidedLower => t,
                    };
                    best = best.max(t);
                }
            }
            best
        })
    }
}

/// Rank of every item by score, 1 for the highest; ties share the better
/// rank.
pub fn plug_in_ranks(scores: &DVector<f64>) -> Vec<usize> {
    (0..scores.len()).map(|m| 1 + scores.iter().filter(|&&s| s > scores[m]).count()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub stage: Stage,
    pub interval_kind: IntervalKind,
    pub critical_value: f64,
    pub intervals: Vec<RankInterval>,
    /// Present for two-sided reports; `pairwise[r]` belongs to `items[r]`.
    pub pairwise: Vec<Vec<PairwiseInterval>>,
    pub scores: Vec<f64>,
    pub plug_in_ranks: Vec<usize>,
    pub replicates: usize,
    pub alpha_level: f64,
    pub seed: u64,
}

fn check_items(items: &[usize], n: usize) -> Result<()> {
    if items.is_empty() {
        return Err(Error::invalid("item set must be nonempty"));
    }
    if let Some(&bad) = items.iter().find(|&&m| m >= n) {
        return Err(Error::invalid(format!("item {bad} out of range for n = {n}")));
    }
    let mut sorted = items.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("item set contains duplicates"));
    }
    Ok(())
}

impl ScoreModel {
    /// Critical value of the simultaneous statistic over `items`.
    pub fn critical_value(&self, items: &[usize], kind: IntervalKind, spec: &BootstrapSpec) -> Result<f64> {
        check_items(items, self.n())?;
        spec.validate()?;
        let sigma = self.sigma_table(items);
        Ok(spec.critical_value(&self.replicates(items, &sigma, kind, spec)))
    }

    /// Two-sided simultaneous intervals at a given critical value.
    pub fn two_sided_at(&self, items: &[usize], c: f64) -> (Vec<RankInterval>, Vec<Vec<PairwiseInterval>>) {
        let n = self.n();
        let mut intervals = Vec::with_capacity(items.len());
        let mut pairwise = Vec::with_capacity(items.len());
        for &m in items {
            let mut above = 0;
            let mut below = 0;
            let mut row = Vec::with_capacity(n - 1);
            for k in (0..n).filter(|&k| k != m) {
                let sigma = self.sigma_unchecked(m, k);
                let estimate = self.theta[k] - self.theta[m];
                let lower = estimate - c * sigma;
                let upper = estimate + c * sigma;
                if lower > 0.0 {
                    above += 1;
                }
                if upper < 0.0 {
                    below += 1;
                }
                row.push(PairwiseInterval { k, m, estimate, sigma, lower, upper });
            }
            intervals.push(RankInterval { item: m, lower: 1 + above, upper: n - below, kind: IntervalKind::TwoSided });
            pairwise.push(row);
        }
        (intervals, pairwise)
    }

    /// One-sided lower rank bounds at a given critical value; the upper end
    /// is always `n`.
    pub fn one_sided_at(&self, items: &[usize], c: f64) -> Vec<RankInterval> {
        let n = self.n();
        items
            .iter()
            .map(|&m| {
                let above = (0..n)
                    .filter(|&k| k != m && self.theta[k] - self.theta[m] > c * self.sigma_unchecked(m, k))
                    .count();
                RankInterval { item: m, lower: 1 + above, upper: n, kind: IntervalKind::OneSidedLower }
            })
            .collect()
    }

    fn report(&self, items: &[usize], kind: IntervalKind, spec: &BootstrapSpec) -> Result<RankReport> {
        let c = self.critical_value(items, kind, spec)?;
        let (intervals, pairwise) = match kind {
            IntervalKind::TwoSided => self.two_sided_at(items, c),
            IntervalKind::OneSidedLower => (self.one_sided_at(items, c), Vec::new()),
        };
        Ok(RankReport {
            stage: self.stage,
            interval_kind: kind,
            critical_value: c,
            intervals,
            pairwise,
            scores: self.theta.iter().copied().collect(),
            plug_in_ranks: plug_in_ranks(&self.theta),
            replicates: spec.b,
            alpha_level: spec.alpha_level,
            seed: spec.seed,
        })
    }
}

/// Simultaneous two-sided rank intervals for `items`.
pub fn rank_ci(model: &ScoreModel, items: &[usize], spec: &BootstrapSpec) -> Result<RankReport> {
    model.report(items, IntervalKind::TwoSided, spec)
}

/// Simultaneous one-sided lower rank bounds for `items`.
pub fn one_sided_rank(model: &ScoreModel, items: &[usize], spec: &BootstrapSpec) -> Result<RankReport> {
    model.report(items, IntervalKind::OneSidedLower, spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDecision {
    pub item: usize,
    pub k: usize,
    /// Lower rank bound; the null `rank <= k` is rejected when it exceeds `k`.
    pub lower: usize,
    pub reject: bool,
    pub critical_value: f64,
}

/// Test of `rank(m) <= k` against `rank(m) > k`.
pub fn rank_threshold_test(model: &ScoreModel, m: usize, k: usize, spec: &BootstrapSpec) -> Result<ThresholdDecision> {
    let n = model.n();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("rank threshold must lie in 1..={n}, got {k}")));
    }
    let c = model.critical_value(&[m], IntervalKind::OneSidedLower, spec)?;
    let lower = model.one_sided_at(&[m], c)[0].lower;
    Ok(ThresholdDecision { item: m, k, lower, reject: lower > k, critical_value: c })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKScreen {
    pub k: usize,
    pub selected: Vec<usize>,
    pub critical_value: f64,
    pub lower_bounds: Vec<usize>,
}

pub fn topk_screen_at(model: &ScoreModel, k: usize, c: f64) -> TopKScreen {
    let items: Vec<usize> = (0..model.n()).collect();
    let lower_bounds: Vec<usize> = model.one_sided_at(&items, c).iter().map(|r| r.lower).collect();
    let selected = items.into_iter().filter(|&m| lower_bounds[m] <= k).collect();
    TopKScreen { k, selected, critical_value: c, lower_bounds }
}

/// Items whose simultaneous one-sided lower rank bound, over all items, is
/// at most `k`.
pub fn topk_screen(model: &ScoreModel, k: usize, spec: &BootstrapSpec) -> Result<TopKScreen> {
    let n = model.n();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("screen size must lie in 1..={n}, got {k}")));
    }
    let items: Vec<usize> = (0..n).collect();
    let c = model.critical_value(&items, IntervalKind::OneSidedLower, spec)?;
    Ok(topk_screen_at(model, k, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ComparisonGraph;
    use crate::model::{hessian, Edge};
    use crate::solver::{fit, FitConfig};

    fn dataset(n: usize, d: usize) -> ComparisonDataset {
        let x = DMatrix::from_fn(n, d, |r, c| (((r * 7 + c * 3) % 11) as f64 / 11.0) - 0.45);
        let edges = ComparisonGraph::complete(n)
            .edges
            .into_iter()
            .enumerate()
            .map(|(e, (i, j))| Edge { i, j, wins: (e % 5) as u64 + 1, trials: 7 })
            .collect();
        ComparisonDataset::new(x, edges, None).unwrap()
    }

    fn dense_sigma(
        ds: &ComparisonDataset,
        params: &Params,
        z: &DMatrix<f64>,
        mask: &[bool],
        m: usize,
        k: usize,
    ) -> f64 {
        let n = ds.n();
        let d = ds.d();
        let h = hessian(params, ds);
        let mut mdiamond = DMatrix::zeros(n + d, n + d);
        for i in 0..n {
            mdiamond[(i, i)] = 1.0 / h[(i, i)];
        }
        let a_inv = h.view((n, n), (d, d)).into_owned().try_inverse().unwrap();
        mdiamond.view_mut((n, n), (d, d)).copy_from(&a_inv);
        let mut u = DVector::zeros(n + d);
        if mask[m] {
            u[m] += 1.0;
        }
        if mask[k] {
            u[k] -= 1.0;
        }
        for c in 0..d {
            u[n + c] = z[(m, c)] - z[(k, c)];
        }
        let v = &mdiamond * u;
        ((v.transpose() * &h * &v)[(0, 0)] / ds.l_ref()).sqrt()
    }

    #[test]
    fn sigma_matches_dense_oracle_one_and_two_stage() {
        let ds = dataset(12, 2);
        let r = fit(&ds, &FitConfig::new(0.05, 0.0)).unwrap();
        let z = DMatrix::from_fn(12, 2, |r, c| ((r + 2 * c) % 5) as f64 * 0.05 - 0.1);
        let one = ScoreModel::one_stage(&ds, &r, Some(&z)).unwrap();
        let refit = crate::solver::two_stage_refit(&ds, &[1, 4]).unwrap();
        let two = ScoreModel::two_stage(&ds, &refit, Some(&z)).unwrap();
        let mut mask = vec![false; 12];
        mask[1] = true;
        mask[4] = true;
        for (m, k) in [(0, 1), (4, 1), (3, 7), (11, 4)] {
            let a = one.sigma_hat(m, k).unwrap();
            let b = dense_sigma(&ds, &r.params, &z, &[true; 12], m, k);
            assert!((a - b).abs() <= 1e-10 * b, "{a} vs {b}");
            let a = two.sigma_hat(m, k).unwrap();
            let b = dense_sigma(&ds, &refit.params, &z, &mask, m, k);
            assert!((a - b).abs() <= 1e-10 * b, "{a} vs {b}");
            assert_eq!(one.sigma_hat(m, k).unwrap(), one.sigma_hat(k, m).unwrap());
        }
        assert!(one.sigma_hat(2, 2).is_err());
    }

    #[test]
    fn zero_critical_value_gives_point_ranks() {
        let ds = dataset(8, 1);
        let r = fit(&ds, &FitConfig::new(0.05, 0.0)).unwrap();
        let model = ScoreModel::one_stage(&ds, &r, None).unwrap();
        let items: Vec<usize> = (0..8).collect();
        let (iv, _) = model.two_sided_at(&items, 0.0);
        let ranks = plug_in_ranks(model.scores());
        for (m, ri) in iv.iter().enumerate() {
            assert_eq!((ri.lower, ri.upper), (ranks[m], ranks[m]));
        }
    }

    #[test]
    fn huge_critical_value_rejects_nothing() {
        let ds = dataset(8, 1);
        let r = fit(&ds, &FitConfig::new(0.05, 0.0)).unwrap();
        let model = ScoreModel::one_stage(&ds, &r, None).unwrap();
        let screen = topk_screen_at(&model, 2, 1e12);
        assert_eq!(screen.selected, (0..8).collect::<Vec<_>>());
        let spec = BootstrapSpec::new(50, 0.1, 3);
        assert_eq!(topk_screen(&model, 8, &spec).unwrap().selected.len(), 8);
        let report = rank_ci(&model, &[0, 3], &spec).unwrap();
        for (iv, rank) in report.intervals.iter().zip([0, 3].map(|m| report.plug_in_ranks[m])) {
            assert!(iv.contains(rank) && iv.lower >= 1 && iv.upper <= 8);
        }
        assert!(rank_ci(&model, &[], &spec).is_err());
        assert!(rank_threshold_test(&model, 0, 0, &spec).is_err());
    }
}
