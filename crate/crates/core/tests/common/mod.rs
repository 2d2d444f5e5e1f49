//! Instance builders and reference implementations shared by the
//! integration tests. Everything here is written from the model definition,
//! not from the library's internals.

#![allow(dead_code)]

use covrank_core::graph::sample_er_graph;
use covrank_core::{ComparisonDataset, Edge, Params};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// ER graph with i.i.d. standard normal covariates and binomial outcomes
/// drawn at `params`, retrying graphs until connected when `connected`.
pub fn random_dataset(
    n: usize,
    d: usize,
    p: f64,
    trials: u64,
    params: &Params,
    seed: u64,
    connected: bool,
) -> ComparisonDataset {
    let mut r = rng(seed);
    let x = DMatrix::from_fn(n, d, |_, _| r.sample::<f64, _>(StandardNormal));
    let base = ComparisonDataset::new(x, vec![Edge { i: 1, j: 0, wins: 0, trials: 1 }], None).unwrap();
    let theta = scores(params, base.covariates());
    for attempt in 0.. {
        let g = sample_er_graph(n, p, seed.wrapping_mul(1000).wrapping_add(attempt)).unwrap();
        if g.edges.is_empty() || (connected && !covrank_core::graph::is_connected(&g)) {
            continue;
        }
        let edges = g
            .edges
            .iter()
            .map(|&(a, b)| {
                let (i, j) = (a.max(b), a.min(b));
                let pr = logistic(theta[i] - theta[j]);
                let wins = Binomial::new(trials, pr).unwrap().sample(&mut r);
                Edge { i, j, wins, trials }
            })
            .collect();
        return base.with_edges(edges, None).unwrap();
    }
    unreachable!()
}

pub fn random_params(n: usize, d: usize, scale: f64, seed: u64) -> Params {
    let mut r = rng(seed ^ 0x5eed);
    let alpha = DVector::from_fn(n, |_, _| scale * (2.0 * r.random::<f64>() - 1.0));
    let beta = DVector::from_fn(d, |_, _| scale * (2.0 * r.random::<f64>() - 1.0));
    Params::new(alpha, beta).unwrap()
}

pub fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

pub fn scores(params: &Params, x: &DMatrix<f64>) -> DVector<f64> {
    &params.alpha + x * &params.beta
}

/// `sum_e (T_e / L) [log(1 + exp(D)) - y D]`, `D = theta_i - theta_j`, `y`
/// the fraction won by `i`.
pub fn ref_loss(theta: &DVector<f64>, ds: &ComparisonDataset) -> f64 {
    let n = ds.n();
    let x = ds.covariates();
    let s = DVector::from_fn(n, |i, _| theta[i] + (0..ds.d()).map(|c| x[(i, c)] * theta[n + c]).sum::<f64>());
    ds.edges()
        .iter()
        .map(|e| {
            let dlt = s[e.i] - s[e.j];
            let y = e.wins as f64 / e.trials as f64;
            let softplus = if dlt > 0.0 { dlt + (-dlt).exp().ln_1p() } else { dlt.exp().ln_1p() };
            e.trials as f64 / ds.l_ref() * (softplus - y * dlt)
        })
        .sum()
}

pub fn ref_gradient(theta: &DVector<f64>, ds: &ComparisonDataset) -> DVector<f64> {
    let n = ds.n();
    let d = ds.d();
    let x = ds.covariates();
    let s = DVector::from_fn(n, |i, _| theta[i] + (0..d).map(|c| x[(i, c)] * theta[n + c]).sum::<f64>());
    let mut g = DVector::zeros(n + d);
    for e in ds.edges() {
        let y = e.wins as f64 / e.trials as f64;
        let r = e.trials as f64 / ds.l_ref() * (logistic(s[e.i] - s[e.j]) - y);
        g[e.i] += r;
        g[e.j] -= r;
        for c in 0..d {
            g[n + c] += r * (x[(e.i, c)] - x[(e.j, c)]);
        }
    }
    g
}

/// `sum_e (T_e / L) a_e a_e'` with `a_e = (e_i - e_j, x_i - x_j)`; four times
/// an upper bound on the Hessian of the loss.
pub fn design_gram(ds: &ComparisonDataset) -> DMatrix<f64> {
    let n = ds.n();
    let d = ds.d();
    let x = ds.covariates();
    let mut m = DMatrix::zeros(n + d, n + d);
    for e in ds.edges() {
        let mut a = DVector::zeros(n + d);
        a[e.i] = 1.0;
        a[e.j] = -1.0;
        for c in 0..d {
            a[n + c] = x[(e.i, c)] - x[(e.j, c)];
        }
        m += &a * a.transpose() * (e.trials as f64 / ds.l_ref());
    }
    m
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}
