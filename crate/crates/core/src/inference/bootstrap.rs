//! Gaussian multiplier bootstrap of the score vector.
//!
//! A replicate replaces every per-trial residual `phi_e - y_e^(l)` by its
//! product with an independent standard normal multiplier and sums. For an
//! edge with `w` wins in `T` trials the per-edge sum is exactly
//! `N(0, w (1 - phi)^2 + (T - w) phi^2)`, so the default sampler draws one
//! normal per edge. The per-trial sampler is kept for validation.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{edge_gaps, logistic, ComparisonDataset, Params};
use crate::rng;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// One normal draw per edge with the exact collapsed variance.
    #[default]
    Collapsed,
    /// One multiplier per trial.
    PerTrial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    /// Replicate count.
    pub b: usize,
    pub seed: u64,
    /// Significance level; the critical value is the `1 - alpha` quantile.
    pub alpha_level: f64,
    #[serde(default)]
    pub sampler: Sampler,
}

impl BootstrapSpec {
    pub fn new(b: usize, alpha_level: f64, seed: u64) -> Self {
        BootstrapSpec { b, seed, alpha_level, sampler: Sampler::Collapsed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return Err(Error::invalid("bootstrap replicate count must be at least 1"));
        }
        if !(self.alpha_level > 0.0 && self.alpha_level < 1.0) {
            return Err(Error::invalid(format!("significance level must lie in (0, 1), got {}", self.alpha_level)));
        }
        Ok(())
    }

    pub fn critical_value(&self, replicates: &[f64]) -> f64 {
        stats::empirical_quantile(replicates, 1.0 - self.alpha_level)
    }
}

/// Add-one Monte Carlo p-value `(1 + #{G >= T}) / (B + 1)`.
pub fn monte_carlo_p_value(statistic: f64, replicates: &[f64]) -> f64 {
    let exceed = replicates.iter().filter(|g| **g >= statistic).count();
    (1 + exceed) as f64 / (replicates.len() + 1) as f64
}

#[derive(Debug, Clone, Copy)]
struct EdgeResidual {
    i: usize,
    j: usize,
    phi: f64,
    wins: u64,
    trials: u64,
    sd: f64,
}

/// Fitted win probabilities per edge, ready for multiplier draws.
#[derive(Debug, Clone)]
pub struct ResidualBasis {
    edges: Vec<EdgeResidual>,
    n: usize,
    l_ref: f64,
}

/// Exact standard deviation of `sum_l (phi - y^(l)) omega^(l)` over an edge
/// with `wins` of `trials` won.
pub fn collapsed_sd(phi: f64, wins: u64, trials: u64) -> f64 {
    let w = wins as f64;
    let lost = (trials - wins) as f64;
    (w * (1.0 - phi) * (1.0 - phi) + lost * phi * phi).sqrt()
}

/// Collapsed draw for one edge.
pub fn collapsed_edge_draw<R: Rng + ?Sized>(rng: &mut R, phi: f64, wins: u64, trials: u64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    collapsed_sd(phi, wins, trials) * z
}

/// Explicit per-trial draw for one edge: `wins` trials with residual
/// `phi - 1` and `trials - wins` with residual `phi`.
pub fn per_trial_edge_draw<R: Rng + ?Sized>(rng: &mut R, phi: f64, wins: u64, trials: u64) -> f64 {
    let mut total = 0.0;
    for l in 0..trials {
        let omega: f64 = rng.sample(StandardNormal);
        let residual = if l < wins { phi - 1.0 } else { phi };
        total += residual * omega;
    }
    total
}

impl ResidualBasis {
    pub fn new(params: &Params, dataset: &ComparisonDataset) -> Self {
        let gaps = edge_gaps(params, dataset);
        let edges = dataset
            .edges()
            .iter()
            .zip(gaps)
            .map(|(e, gap)| {
                let phi = logistic(gap);
                EdgeResidual {
                    i: e.i,
                    j: e.j,
                    phi,
                    wins: e.wins,
                    trials: e.trials,
                    sd: collapsed_sd(phi, e.wins, e.trials),
                }
            })
            .collect();
        ResidualBasis { edges, n: dataset.n(), l_ref: dataset.l_ref() }
    }

    pub fn l_ref(&self) -> f64 {
        self.l_ref
    }

    /// Item block of one bootstrap score vector,
    /// `(1 / L) sum_e S_e (e_i - e_j)`.
    pub fn draw_item_scores(&self, sampler: Sampler, seed: u64, replicate: usize) -> DVector<f64> {
        let mut r = rng::stream(seed, rng::Purpose::Bootstrap, replicate as u64);
        let mut g = DVector::zeros(self.n);
        for e in &self.edges {
            let s = match sampler {
                Sampler::Collapsed => {
                    let z: f64 = r.sample(StandardNormal);
                    e.sd * z
                }
                Sampler::PerTrial => per_trial_edge_draw(&mut r, e.phi, e.wins, e.trials),
            } / self.l_ref;
            g[e.i] += s;
            g[e.j] -= s;
        }
        g
    }

    /// Evaluates `statistic` on every replicate; replicate `b` always uses
    /// stream `b` of the spec seed, whatever the thread count.
    pub fn replicate<F>(&self, spec: &BootstrapSpec, statistic: F) -> Vec<f64>
    where
        F: Fn(&DVector<f64>) -> f64 + Sync,
    {
        (0..spec.b).into_par_iter().map(|b| statistic(&self.draw_item_scores(spec.sampler, spec.seed, b))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Edge;
    use nalgebra::DMatrix;

    #[test]
    fn zero_residual_edges_give_zero_draws() {
        // y in {0, 1} with phi saturated exactly.
        assert_eq!(collapsed_sd(1.0, 5, 5), 0.0);
        assert_eq!(collapsed_sd(0.0, 0, 5), 0.0);
        assert!((collapsed_sd(0.3, 7, 20) - (7.0 * 0.49 + 13.0 * 0.09f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn p_value_add_one() {
        assert_eq!(monte_carlo_p_value(5.0, &[1.0, 2.0, 6.0]), 0.5);
        assert_eq!(monte_carlo_p_value(9.0, &[1.0, 2.0, 6.0]), 0.25);
    }

    #[test]
    fn replicates_are_deterministic() {
        let ds = ComparisonDataset::new(
            DMatrix::zeros(3, 0),
            vec![Edge { i: 1, j: 0, wins: 2, trials: 5 }, Edge { i: 2, j: 1, wins: 4, trials: 5 }],
            None,
        )
        .unwrap();
        let basis = ResidualBasis::new(&Params::zeros(3, 0), &ds);
        let spec = BootstrapSpec::new(50, 0.05, 9);
        let a = basis.replicate(&spec, |g| g.amax());
        let b = basis.replicate(&spec, |g| g.amax());
        assert_eq!(a, b);
        let c = basis.replicate(&BootstrapSpec { seed: 10, ..spec }, |g| g.amax());
        assert_ne!(a, c);
        assert!(BootstrapSpec::new(0, 0.05, 1).validate().is_err());
        assert!(BootstrapSpec::new(10, 1.0, 1).validate().is_err());
    }
}
