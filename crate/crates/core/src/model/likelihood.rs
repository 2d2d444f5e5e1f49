//! Negative log-likelihood of the covariate-assisted BTL model and its
//! derivatives.
//!
//! For an edge `(i, j)` with `i > j` write `delta = theta_i - theta_j` where
//! `theta_i = alpha_i + x_i' beta`. The per-edge contribution to the loss is
//! `w * (-y delta + log(1 + e^delta))` with `y` the fraction of trials won by
//! `i` and `w = trials / l_ref`.
//!
//! Every derivative is a push-forward of per-edge scalars through the map
//! `T = [I | X]`: the gradient is `T' g` and the Hessian `T' Lap T` for the
//! weighted graph Laplacian `Lap`. All sums run over edges in their stored
//! order, so results are reproducible bit for bit.

use nalgebra::{DMatrix, DVector};

use super::dataset::{ComparisonDataset, Params};
use crate::error::{Error, Result};

/// Logistic function `e^t / (1 + e^t)`.
#[inline]
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Derivative of the logistic function, `phi(t) (1 - phi(t))`.
#[inline]
pub fn logistic_slope(t: f64) -> f64 {
    let p = logistic(t);
    p * (1.0 - p)
}

/// Probability that item `j` is preferred over item `i`.
pub fn btl_prob(params: &Params, dataset: &ComparisonDataset, i: usize, j: usize) -> Result<f64> {
    let n = dataset.n();
    if i == j {
        return Err(Error::invalid(format!("btl_prob needs two distinct items, got ({i}, {i})")));
    }
    if i >= n || j >= n {
        return Err(Error::invalid(format!("items ({i}, {j}) out of range for n = {n}")));
    }
    Ok(logistic(params.score(dataset, j) - params.score(dataset, i)))
}

/// Per-edge score gaps `theta_i - theta_j`, in edge order.
pub fn edge_gaps(params: &Params, dataset: &ComparisonDataset) -> Vec<f64> {
    let s = dataset.scores(params);
    dataset.edges().iter().map(|e| s[e.i] - s[e.j]).collect()
}

pub fn loss(params: &Params, dataset: &ComparisonDataset) -> f64 {
    let s = dataset.scores(params);
    dataset
        .edges()
        .iter()
        .map(|e| {
            let delta = s[e.i] - s[e.j];
            dataset.weight(e) * (-e.win_fraction() * delta + softplus(delta))
        })
        .sum()
}

/// `loss + lambda |alpha|_1 + tau/2 |theta|^2`.
pub fn regularized_loss(params: &Params, dataset: &ComparisonDataset, lambda: f64, tau: f64) -> Result<f64> {
    check_penalties(lambda, tau)?;
    Ok(loss(params, dataset) + penalty(params, lambda, tau))
}

pub(crate) fn check_penalties(lambda: f64, tau: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be a finite nonnegative number, got {lambda}")));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("tau must be a finite nonnegative number, got {tau}")));
    }
    Ok(())
}

pub(crate) fn penalty(params: &Params, lambda: f64, tau: f64) -> f64 {
    let l1: f64 = params.alpha.iter().map(|a| a.abs()).sum();
    let sq = params.alpha.norm_squared() + params.beta.norm_squared();
    lambda * l1 + 0.5 * tau * sq
}

/// Pushes an n-vector of per-item quantities through `T'`: returns
/// `(u, X' u)` stacked.
fn push_forward(dataset: &ComparisonDataset, item_part: DVector<f64>) -> DVector<f64> {
    let n = dataset.n();
    let d = dataset.d();
    let beta_part = dataset.covariates().tr_mul(&item_part);
    let mut out = DVector::zeros(n + d);
    out.rows_mut(0, n).copy_from(&item_part);
    out.rows_mut(n, d).copy_from(&beta_part);
    out
}

/// Loss and gradient in one pass over the edges.
pub fn loss_and_gradient(params: &Params, dataset: &ComparisonDataset) -> (f64, DVector<f64>) {
    let s = dataset.scores(params);
    let mut g = DVector::zeros(dataset.n());
    let mut value = 0.0;
    for e in dataset.edges() {
        let delta = s[e.i] - s[e.j];
        let w = dataset.weight(e);
        let y = e.win_fraction();
        value += w * (-y * delta + softplus(delta));
        let r = w * (logistic(delta) - y);
        g[e.i] += r;
        g[e.j] -= r;
    }
    (value, push_forward(dataset, g))
}

/// Gradient of [`loss`] with respect to the stacked `(alpha, beta)`.
pub fn gradient(params: &Params, dataset: &ComparisonDataset) -> DVector<f64> {
    loss_and_gradient(params, dataset).1
}

/// Per-edge curvature `w * phi'(delta)`, in edge order.
pub fn edge_curvatures(params: &Params, dataset: &ComparisonDataset) -> Vec<f64> {
    let s = dataset.scores(params);
    dataset.edges().iter().map(|e| dataset.weight(e) * logistic_slope(s[e.i] - s[e.j])).collect()
}

/// Dense Hessian of [`loss`], `(n + d) x (n + d)`.
pub fn hessian(params: &Params, dataset: &ComparisonDataset) -> DMatrix<f64> {
    hessian_from_curvatures(dataset, &edge_curvatures(params, dataset))
}

pub(crate) fn hessian_from_curvatures(dataset: &ComparisonDataset, curv: &[f64]) -> DMatrix<f64> {
    let n = dataset.n();
    let d = dataset.d();
    let x = dataset.covariates();
    let mut h = DMatrix::zeros(n + d, n + d);
    // Lap X accumulated alongside Lap.
    let mut lap_x = DMatrix::zeros(n, d);
    for (e, &c) in dataset.edges().iter().zip(curv) {
        h[(e.i, e.i)] += c;
        h[(e.j, e.j)] += c;
        h[(e.i, e.j)] -= c;
        h[(e.j, e.i)] -= c;
        for col in 0..d {
            let diff = c * (x[(e.i, col)] - x[(e.j, col)]);
            lap_x[(e.i, col)] += diff;
            lap_x[(e.j, col)] -= diff;
        }
    }
    let beta_block = x.tr_mul(&lap_x);
    h.view_mut((0, n), (n, d)).copy_from(&lap_x);
    h.view_mut((n, 0), (d, n)).copy_from(&lap_x.transpose());
    h.view_mut((n, n), (d, d)).copy_from(&beta_block);
    // Symmetrise the beta block against rounding in X' (Lap X).
    for a in 0..d {
        for b in 0..a {
            let avg = 0.5 * (h[(n + a, n + b)] + h[(n + b, n + a)]);
            h[(n + a, n + b)] = avg;
            h[(n + b, n + a)] = avg;
        }
    }
    h
}

/// The blocks of the loss Hessian that inference needs, without forming the
/// dense `(n + d)^2` matrix.
#[derive(Debug, Clone)]
pub struct HessianBlocks {
    /// `H_ii`.
    pub diag: DVector<f64>,
    /// Cross block `Lap X`, `n x d`.
    pub cross: DMatrix<f64>,
    /// Covariate block `X' Lap X`.
    pub beta_block: DMatrix<f64>,
    /// Off-diagonal item entries keyed by `(i, j)`, `i > j`.
    off_diag: std::collections::HashMap<(usize, usize), f64>,
}

impl HessianBlocks {
    pub fn new(params: &Params, dataset: &ComparisonDataset) -> Self {
        let curv = edge_curvatures(params, dataset);
        let n = dataset.n();
        let d = dataset.d();
        let x = dataset.covariates();
        let mut diag = DVector::zeros(n);
        let mut cross = DMatrix::zeros(n, d);
        let mut off_diag = std::collections::HashMap::with_capacity(dataset.edges().len());
        for (e, &c) in dataset.edges().iter().zip(&curv) {
            diag[e.i] += c;
            diag[e.j] += c;
            *off_diag.entry((e.i, e.j)).or_insert(0.0) -= c;
            for col in 0..d {
                let diff = c * (x[(e.i, col)] - x[(e.j, col)]);
                cross[(e.i, col)] += diff;
                cross[(e.j, col)] -= diff;
            }
        }
        let mut beta_block = x.tr_mul(&cross);
        beta_block = (&beta_block + beta_block.transpose()) * 0.5;
        HessianBlocks { diag, cross, beta_block, off_diag }
    }

    /// Item-block entry `H_ij`.
    pub fn item_entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.off_diag.get(&(i.max(j), i.min(j))).copied().unwrap_or(0.0)
    }
}

/// Matrix-free Hessian-vector product given per-edge curvatures.
pub(crate) fn hessian_apply(dataset: &ComparisonDataset, curv: &[f64], v: &DVector<f64>) -> DVector<f64> {
    let n = dataset.n();
    let d = dataset.d();
    let u = v.rows(0, n) + dataset.covariates() * v.rows(n, d);
    let mut lu = DVector::zeros(n);
    for (e, &c) in dataset.edges().iter().zip(curv) {
        let t = c * (u[e.i] - u[e.j]);
        lu[e.i] += t;
        lu[e.j] -= t;
    }
    push_forward(dataset, lu)
}

/// Largest eigenvalue of the loss Hessian at `params` by power iteration,
/// to relative tolerance `tol`.
pub fn hessian_spectral_norm(params: &Params, dataset: &ComparisonDataset, tol: f64, max_iter: usize) -> f64 {
    let curv = edge_curvatures(params, dataset);
    let dim = dataset.dim();
    if dim == 0 || dataset.edges().is_empty() {
        return 0.0;
    }
    // Fixed irregular start vector.
    let mut v = DVector::from_fn(dim, |k, _| 1.0 + ((k * 7919) % 13) as f64 / 13.0 - 0.46 * ((k % 2) as f64));
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let hv = hessian_apply(dataset, &curv, &v);
        let next = v.dot(&hv);
        let norm = hv.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = hv / norm;
        if (next - estimate).abs() <= tol * next.abs() {
            return norm.max(next);
        }
        estimate = next;
    }
    estimate
}
