//! Synthetic scenarios and Monte Carlo experiment drivers.
//!
//! A [`Scenario`] fixes the ground truth (covariates, `alpha`, `beta`) from
//! its seed. Experiments keep that truth and redraw the comparison graph
//! and outcomes in every repetition.

mod experiments;
mod presets;

pub use experiments::{
    run_coverage_experiment, run_normality_experiment, run_power_experiment, run_support_experiment, CoverageConfig,
    CoverageOutput, CoverageRow, CoverageSummary, NormalityConfig, NormalityOutput, NormalityRow, NormalitySummary,
    PowerConfig, PowerOutput, PowerRow, PowerSummary, SupportConfig, SupportOutput, SupportRow,
};
pub use presets::{preset_fig1, preset_fig3, preset_table1, Preset};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ComparisonGraph;
use crate::model::{check_identifiability, logistic, ComparisonDataset, Edge, Params, SparsityBudget};
use crate::rng::{self, Purpose};

/// Law of the intrinsic scores on the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum AlphaLaw {
    /// `|alpha_i| ~ U[low, high]` with an independent random sign.
    Uniform { low: f64, high: f64 },
    /// `alpha_i = (3 rho / 100) omega_i`, `|omega_i| ~ U[1, ln 5]` with a
    /// random sign. The `omega` draw does not depend on `rho`, so scenarios
    /// differing only in `rho` share it.
    SignalLevel { rho: f64 },
}

impl AlphaLaw {
    pub fn standard() -> Self {
        AlphaLaw::Uniform { low: 0.3, high: 0.3 * 5f64.ln() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub d: usize,
    /// Support size of `alpha`.
    pub k: usize,
    /// Edge probability of the comparison graph.
    pub p: f64,
    /// Trials per compared pair.
    pub trials: u64,
    pub alpha_law: AlphaLaw,
    /// Support positions; `None` selects `0..k`.
    pub support: Option<Vec<usize>>,
    /// Radius of the sphere `beta` is drawn from; `None` selects
    /// `0.5 sqrt(n / (d + 1))`.
    pub beta_radius: Option<f64>,
    pub seed: u64,
}

impl Scenario {
    pub fn new(n: usize, d: usize, k: usize, p: f64, trials: u64, seed: u64) -> Self {
        Scenario { n, d, k, p, trials, alpha_law: AlphaLaw::standard(), support: None, beta_radius: None, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.k > self.n {
            problems.push(format!("k = {} exceeds n = {}", self.k, self.n));
        }
        if 2 * self.k + self.d + 1 > self.n {
            problems.push(format!("2k + d + 1 = {} exceeds n = {}", 2 * self.k + self.d + 1, self.n));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            problems.push(format!("edge probability must lie in (0, 1], got {}", self.p));
        }
        if self.trials == 0 {
            problems.push("trials per pair must be positive".to_string());
        }
        if let Some(s) = &self.support {
            let mut sorted = s.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != s.len() || s.len() != self.k || s.iter().any(|&i| i >= self.n) {
                problems.push(format!("support override must list {} distinct items below {}", self.k, self.n));
            }
        }
        match self.alpha_law {
            AlphaLaw::Uniform { low, high } if !(low.is_finite() && high.is_finite() && 0.0 <= low && low <= high) => {
                problems.push(format!("alpha magnitude range [{low}, {high}] is invalid"));
            }
            AlphaLaw::SignalLevel { rho } if !rho.is_finite() => problems.push("signal level must be finite".into()),
            _ => {}
        }
        if let Some(r) = self.beta_radius {
            if !(r.is_finite() && r >= 0.0) {
                problems.push(format!("beta radius must be nonnegative, got {r}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(problems.join("; ")))
        }
    }

    pub fn support_set(&self) -> Vec<usize> {
        let mut s = self.support.clone().unwrap_or_else(|| (0..self.k).collect());
        s.sort_unstable();
        s
    }

    pub fn beta_norm(&self) -> f64 {
        self.beta_radius.unwrap_or_else(|| 0.5 * (self.n as f64 / (self.d + 1) as f64).sqrt())
    }
}

/// Ground truth of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub params: Params,
    /// Centred covariates with maximum row norm `sqrt((d + 1) / n)`.
    #[serde(with = "crate::flat::matrix")]
    pub covariates: DMatrix<f64>,
    pub support: Vec<usize>,
}

impl Truth {
    /// `theta_i = alpha_i + x_i' beta` under covariates `z` (`None` for `X`).
    pub fn scores(&self, z: Option<&DMatrix<f64>>) -> DVector<f64> {
        let z = z.unwrap_or(&self.covariates);
        &self.params.alpha + z * &self.params.beta
    }

    /// Rank of every item, 1 for the highest true score.
    pub fn ranks(&self, z: Option<&DMatrix<f64>>) -> Vec<usize> {
        crate::inference::plug_in_ranks(&self.scores(z))
    }
}

fn centred_scaled_covariates<R: Rng>(r: &mut R, n: usize, d: usize) -> DMatrix<f64> {
    let mut x = DMatrix::from_fn(n, d, |_, _| r.random::<f64>() - 0.5);
    for c in 0..d {
        let mean = x.column(c).mean();
        x.column_mut(c).add_scalar_mut(-mean);
    }
    let max_norm = x.row_iter().map(|row| row.norm()).fold(0.0, f64::max);
    if max_norm > 0.0 {
        x *= ((d + 1) as f64 / n as f64).sqrt() / max_norm;
    }
    x
}

fn signed_uniform<R: Rng>(r: &mut R, low: f64, high: f64) -> f64 {
    let magnitude = low + (high - low) * r.random::<f64>();
    if r.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

/// Draws the truth of `scenario` from `rng::stream(seed, Truth, 0)`:
/// covariates first, then `beta`, then the support entries of `alpha`.
pub fn generate_truth(scenario: &Scenario) -> Result<Truth> {
    scenario.validate()?;
    let (n, d) = (scenario.n, scenario.d);
    let mut r = rng::stream(scenario.seed, Purpose::Truth, 0);
    let covariates = centred_scaled_covariates(&mut r, n, d);

    let mut beta = DVector::from_fn(d, |_, _| r.sample::<f64, _>(StandardNormal));
    let norm = beta.norm();
    if norm > 0.0 {
        beta *= scenario.beta_norm() / norm;
    }

    let support = scenario.support_set();
    let mut alpha = DVector::zeros(n);
    for &i in &support {
        alpha[i] = match scenario.alpha_law {
            AlphaLaw::Uniform { low, high } => signed_uniform(&mut r, low, high),
            AlphaLaw::SignalLevel { rho } => 0.03 * rho * signed_uniform(&mut r, 1.0, 5f64.ln()),
        };
    }

    let verdict = check_identifiability(SparsityBudget { k: scenario.k }, &covariates);
    if !verdict.passed() {
        return Err(Error::InvalidInput(format!("generated design is not identifiable: {verdict:?}")));
    }
    Ok(Truth { params: Params::new(alpha, beta)?, covariates, support })
}

/// Trials per edge: one count for every edge or one per edge in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Trials {
    Constant(u64),
    PerEdge(Vec<u64>),
}

/// Binomial outcomes on every edge of `graph`, drawn in edge order from
/// `rng::stream(seed, Outcomes, 0)`. `wins` counts trials won by the larger
/// index `i`, with probability `phi(theta_i - theta_j)`.
pub fn simulate_comparisons(
    truth: &Truth,
    graph: &ComparisonGraph,
    trials: &Trials,
    seed: u64,
) -> Result<ComparisonDataset> {
    let n = truth.params.n();
    if graph.n != n {
        return Err(Error::invalid(format!("graph has {} vertices, truth has {n} items", graph.n)));
    }
    if let Trials::PerEdge(t) = trials {
        if t.len() != graph.edges.len() {
            return Err(Error::invalid(format!("{} trial counts for {} edges", t.len(), graph.edges.len())));
        }
    }
    let theta = truth.scores(None);
    let mut r = rng::stream(seed, Purpose::Outcomes, 0);
    let mut edges = Vec::with_capacity(graph.edges.len());
    for (e, &(i, j)) in graph.edges.iter().enumerate() {
        let t = match trials {
            Trials::Constant(t) => *t,
            Trials::PerEdge(v) => v[e],
        };
        if t == 0 {
            return Err(Error::invalid(format!("edge ({i}, {j}) has zero trials")));
        }
        let prob = logistic(theta[i] - theta[j]);
        let wins = Binomial::new(t, prob)
            .map_err(|err| Error::invalid(format!("binomial({t}, {prob}): {err}")))?
            .sample(&mut r);
        edges.push(Edge { i, j, wins, trials: t });
    }
    ComparisonDataset::new(truth.covariates.clone(), edges, None)
}
