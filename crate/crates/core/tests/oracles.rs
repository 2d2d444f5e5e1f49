//! Library results against independently coded references.

mod common;

use std::collections::HashMap;

use covrank_core::graph::{connected_components, sample_er_graph, ComparisonGraph};
use covrank_core::inference::{gof_bootstrap, topk_screen, BootstrapSpec, ScoreModel};
use covrank_core::model::{compute_diagnostics, loss};
use covrank_core::simulate::{simulate_comparisons, Trials, Truth};
use covrank_core::solver::{fit, two_stage_refit};
use covrank_core::stats::{ks_statistic, normal_cdf};
use covrank_core::{ComparisonDataset, Edge, FitConfig, FitResult, Params};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use common::{logistic, max_abs, random_dataset, random_params};

#[test]
fn loss_is_per_trial_negative_log_likelihood_over_l() {
    let truth = random_params(9, 2, 0.7, 3);
    let ds = random_dataset(9, 2, 0.7, 6, &truth, 3, false);
    let at = random_params(9, 2, 1.2, 4);
    let s = common::scores(&at, ds.covariates());
    let mut nll = 0.0;
    for e in ds.edges() {
        // Unroll the aggregated counts into individual trials.
        for t in 0..e.trials {
            let p_i = logistic(s[e.i] - s[e.j]);
            nll -= if t < e.wins { p_i.ln() } else { (1.0 - p_i).ln() };
        }
    }
    let expected = nll / ds.l_ref();
    assert!((loss(&at, &ds) - expected).abs() <= 1e-12 * expected.abs().max(1.0));
}

#[test]
fn diagnostics_match_constrained_eigensolve() {
    let n = 8;
    let truth = random_params(n, 1, 0.5, 11);
    let ds = random_dataset(n, 1, 0.8, 3, &truth, 11, false);
    let x = ds.covariates();
    let dim = n + 1;
    let mut sigma = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..i {
            let mut v = DVector::zeros(dim);
            v[i] = 1.0;
            v[j] = -1.0;
            v[n] = x[(i, 0)] - x[(j, 0)];
            sigma += &v * v.transpose();
        }
    }
    // Orthonormal basis of { v : [1 | X]' v_alpha = 0 }: left null vectors of
    // [1 | X] for the item block, the unit vector for the covariate block.
    let xbar = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { x[(r, 0)] });
    let gram = SymmetricEigen::new(&xbar * xbar.transpose());
    let mut basis = Vec::new();
    for k in 0..n {
        if gram.eigenvalues[k].abs() < 1e-9 {
            let mut v = DVector::zeros(dim);
            v.rows_mut(0, n).copy_from(&gram.eigenvectors.column(k));
            basis.push(v);
        }
    }
    assert_eq!(basis.len(), n - 2);
    let mut e_beta = DVector::zeros(dim);
    e_beta[n] = 1.0;
    basis.push(e_beta);
    let b = DMatrix::from_columns(&basis);
    let restricted = SymmetricEigen::new(b.transpose() * &sigma * &b);
    let diag = compute_diagnostics(&truth, &ds);
    let lo = restricted.eigenvalues.min();
    assert!((diag.sigma_min_perp - lo).abs() <= 1e-9 * lo.max(1.0), "{} vs {lo}", diag.sigma_min_perp);
    let hi = SymmetricEigen::new(sigma).eigenvalues.max();
    assert!((diag.sigma_max - hi).abs() <= 1e-9 * hi);
}

#[test]
fn er_edge_count_matches_binomial_mean() {
    let counts: Vec<f64> = (0..1000).map(|s| sample_er_graph(200, 0.1, s).unwrap().edges.len() as f64).collect();
    let pairs = 19_900.0;
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let se = (pairs * 0.1 * 0.9 / counts.len() as f64).sqrt();
    assert!((mean - 1990.0).abs() <= 3.0 * se, "mean {mean}, se {se}");
}

fn bfs_components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut comps = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut comp = vec![s];
        seen[s] = true;
        let mut head = 0;
        while head < comp.len() {
            let v = comp[head];
            head += 1;
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps.sort();
    comps
}

#[test]
fn components_match_bfs() {
    for seed in 0..20 {
        let g = sample_er_graph(50, 0.02, seed).unwrap();
        let labels = connected_components(&g);
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for (v, l) in labels.iter().enumerate() {
            groups.entry(*l).or_default().push(v);
        }
        let mut ours: Vec<Vec<usize>> = groups.into_values().collect();
        ours.sort();
        assert_eq!(ours, bfs_components(50, &g.edges), "seed {seed}");
    }
}

/// Newton iterations on the reference loss over the free coordinates
/// `alpha_S` and `beta`, all other intrinsic scores held at zero.
fn newton_on(ds: &ComparisonDataset, support: &[usize]) -> DVector<f64> {
    let n = ds.n();
    let d = ds.d();
    let free: Vec<usize> = support.iter().copied().chain(n..n + d).collect();
    let mut theta = DVector::zeros(n + d);
    for _ in 0..100 {
        let g = common::ref_gradient(&theta, ds);
        let x = ds.covariates();
        let s = DVector::from_fn(n, |i, _| theta[i] + (0..d).map(|c| x[(i, c)] * theta[n + c]).sum::<f64>());
        let mut h = DMatrix::zeros(n + d, n + d);
        for e in ds.edges() {
            let p = logistic(s[e.i] - s[e.j]);
            let mut a = DVector::zeros(n + d);
            a[e.i] = 1.0;
            a[e.j] = -1.0;
            for c in 0..d {
                a[n + c] = x[(e.i, c)] - x[(e.j, c)];
            }
            h += &a * a.transpose() * (e.trials as f64 / ds.l_ref() * p * (1.0 - p));
        }
        let hf = DMatrix::from_fn(free.len(), free.len(), |r, c| h[(free[r], free[c])]);
        let gf = DVector::from_fn(free.len(), |r, _| g[free[r]]);
        let step = hf.lu().solve(&gf).expect("restricted Hessian is invertible");
        for (k, &c) in free.iter().enumerate() {
            theta[c] -= step[k];
        }
        if max_abs(step.iter().copied()) < 1e-14 {
            break;
        }
    }
    theta
}

#[test]
fn huge_lambda_zeroes_alpha_and_leaves_covariate_mle() {
    let mut truth = random_params(20, 2, 0.6, 21);
    truth.alpha.fill(0.0);
    let ds = random_dataset(20, 2, 0.5, 30, &truth, 21, true);
    let config = FitConfig { grad_tol: Some(1e-10), ..FitConfig::new(1e6, 0.0) };
    let r = fit(&ds, &config).unwrap();
    assert!(r.params.alpha.iter().all(|a| *a == 0.0));
    let oracle = newton_on(&ds, &[]);
    let diff = max_abs((&r.params.beta - oracle.rows(20, 2)).iter().copied());
    assert!(diff <= 1e-6, "beta differs from the reduced-model MLE by {diff}");
}

#[test]
fn support_refit_matches_newton_oracle() {
    let mut truth = random_params(30, 2, 0.8, 31);
    for i in 3..30 {
        truth.alpha[i] = 0.0;
    }
    let ds = random_dataset(30, 2, 0.6, 50, &truth, 31, true);
    let support = [0, 1, 2];
    let refit = two_stage_refit(&ds, &support).unwrap();
    let oracle = newton_on(&ds, &support);
    let diff = max_abs((refit.params.stacked() - oracle).iter().copied());
    assert!(diff <= 1e-8, "refit differs from the Newton oracle by {diff}");
}

fn fixed_fit(params: Params) -> FitResult {
    FitResult {
        support: params.support(),
        params,
        iterations: 0,
        residual: 0.0,
        tolerance: 0.0,
        converged: true,
        step_size: 1.0,
        objective: 0.0,
        lambda: 0.0,
        tau: 0.0,
        trace: None,
    }
}

#[test]
fn single_edge_gof_replicates_are_half_normal() {
    // One comparison, lost by item 1, scored at phi = 0.5: H_11 = 1/4 and each
    // replicate is |0.5 omega| / sqrt(H_11) = |omega|.
    let ds = ComparisonDataset::new(DMatrix::zeros(2, 0), vec![Edge { i: 1, j: 0, wins: 0, trials: 1 }], None).unwrap();
    let r = fixed_fit(Params::zeros(2, 0));
    let spec = BootstrapSpec::new(10_000, 0.05, 1);
    let (_, reps) = gof_bootstrap(&r, &ds, &spec).unwrap();
    let ks = ks_statistic(&reps, |x| if x <= 0.0 { 0.0 } else { 2.0 * normal_cdf(x) - 1.0 });
    // 1% critical value of the one-sample KS distance at 10^4 draws.
    assert!(ks < 1.63 / 100.0, "KS {ks}");
}

#[test]
fn strong_separation_screens_the_true_top_k() {
    let n = 10;
    // Scores 0.3 apart on a complete graph with 20000 trials per pair, far
    // beyond any bootstrap critical value in standardised units.
    let x = DMatrix::from_fn(n, 1, |r, _| ((r * 7) % 10) as f64 / 10.0 - 0.45);
    let base = ComparisonDataset::new(x, vec![Edge { i: 1, j: 0, wins: 0, trials: 1 }], None).unwrap();
    let alpha = DVector::from_fn(n, |i, _| 0.3 * ((i * 3) % n) as f64 - 1.35);
    let truth = Truth {
        params: Params::new(alpha, DVector::zeros(1)).unwrap(),
        covariates: base.covariates().clone(),
        support: (0..n).collect(),
    };
    let ds = simulate_comparisons(&truth, &ComparisonGraph::complete(n), &Trials::Constant(20_000), 5).unwrap();
    let r = fit(&ds, &FitConfig::new(1e-3, 1e-2)).unwrap();
    let model = ScoreModel::one_stage(&ds, &r, None).unwrap();
    let gaps_over_sigma = (0..n)
        .flat_map(|m| (0..n).filter(move |&k| k != m).map(move |k| (m, k)))
        .map(|(m, k)| (truth.params.alpha[m] - truth.params.alpha[k]).abs() / model.sigma_hat(m, k).unwrap())
        .fold(f64::INFINITY, f64::min);
    assert!(gaps_over_sigma > 10.0, "smallest standardised gap {gaps_over_sigma}");
    let true_ranks = truth.ranks(None);
    for k in [1, 3, 6] {
        let screen = topk_screen(&model, k, &BootstrapSpec::new(200, 0.05, 2)).unwrap();
        let expected: Vec<usize> = (0..n).filter(|&m| true_ranks[m] <= k).collect();
        assert_eq!(screen.selected, expected, "K = {k}");
    }
    let all = topk_screen(&model, n, &BootstrapSpec::new(50, 0.05, 2)).unwrap();
    assert_eq!(all.selected.len(), n);
}

#[test]
fn even_edge_concentrates() {
    let truth = Truth { params: Params::zeros(2, 0), covariates: DMatrix::zeros(2, 0), support: vec![] };
    let ds = simulate_comparisons(&truth, &ComparisonGraph::complete(2), &Trials::Constant(1_000_000), 9).unwrap();
    let frac = ds.edges()[0].win_fraction();
    assert!((frac - 0.5).abs() <= 0.002, "{frac}");
}

#[test]
fn three_item_joint_law_matches_enumeration() {
    let alpha = DVector::from_vec(vec![0.4, -0.3, 0.0]);
    let truth = Truth {
        params: Params::new(alpha.clone(), DVector::zeros(0)).unwrap(),
        covariates: DMatrix::zeros(3, 0),
        support: vec![0, 1],
    };
    let graph = ComparisonGraph::complete(3);
    let draws = 100_000;
    let mut counts = vec![0usize; 27];
    for s in 0..draws {
        let ds = simulate_comparisons(&truth, &graph, &Trials::Constant(2), s).unwrap();
        let cell = ds.edges().iter().fold(0, |acc, e| acc * 3 + e.wins as usize);
        counts[cell] += 1;
    }
    // Edges are stored with i > j; cell digits follow that edge order.
    let ds = simulate_comparisons(&truth, &graph, &Trials::Constant(2), 0).unwrap();
    let probs: Vec<f64> = ds.edges().iter().map(|e| logistic(alpha[e.i] - alpha[e.j])).collect();
    let binom = |w: usize, p: f64| [(1.0 - p) * (1.0 - p), 2.0 * p * (1.0 - p), p * p][w];
    let mut chi2 = 0.0;
    for (cell, &c) in counts.iter().enumerate() {
        let digits = [cell / 9, (cell / 3) % 3, cell % 3];
        let p: f64 = digits.iter().zip(&probs).map(|(&w, &pe)| binom(w, pe)).product();
        let expected = p * draws as f64;
        chi2 += (c as f64 - expected).powi(2) / expected;
    }
    let critical = ChiSquared::new(26.0).unwrap().inverse_cdf(0.999);
    assert!(chi2 < critical, "chi-square {chi2} against {critical}");
}
