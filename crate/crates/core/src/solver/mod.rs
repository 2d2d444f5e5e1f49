//! Penalised maximum likelihood by proximal gradient descent.
//!
//! The objective is `loss(theta) + lambda |alpha|_1 + tau/2 |theta|^2`. Each
//! iteration takes a gradient step on the smooth part `loss + tau/2 |.|^2`
//! and applies [`soft_threshold_block`], which shrinks the `alpha` block and
//! leaves `beta` alone. Coordinates killed by the prox map are exact zeros.

mod refit;
mod tuning;

pub use refit::{two_stage_refit, RefitResult};
pub use tuning::{default_tuning, pilot_kappa, KappaEstimates};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, ComparisonGraph};
use crate::model::{
    self, check_penalties, hessian_spectral_norm, loss_and_gradient, penalty, ComparisonDataset, Params, SparsityBudget,
};

/// Coordinate-wise `sign(x) max(|x| - gamma, 0)` on the first `n` entries;
/// the rest pass through. Zeros come out as `+0.0`.
pub fn soft_threshold_block(v: &DVector<f64>, n: usize, gamma: f64) -> DVector<f64> {
    assert!(gamma >= 0.0, "soft threshold needs gamma >= 0");
    let mut out = v.clone();
    for x in out.rows_mut(0, n).iter_mut() {
        let a = x.abs();
        *x = if a > gamma { x.signum() * (a - gamma) } else { 0.0 };
    }
    out
}

/// Step size rule for [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    /// `2 / (2 tau + 1.05 lambda_max(H(theta0)))`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// l1 weight on the intrinsic scores.
    pub lambda: f64,
    /// Ridge weight on the full parameter vector.
    pub tau: f64,
    /// Multipliers used by [`default_tuning`] when tuning automatically.
    pub c_lambda: f64,
    pub c_tau: f64,
    pub step: StepSize,
    /// Halve the step whenever the objective would increase.
    pub backtracking: bool,
    pub max_iter: usize,
    /// Prox-stationarity tolerance; `None` means
    /// `1e-8 * (1 + |grad loss(theta0)|)`.
    pub grad_tol: Option<f64>,
    /// Warm start; zero when absent.
    #[serde(skip)]
    pub init: Option<Params>,
    pub record_trace: bool,
    /// Refuse disconnected graphs and degenerate designs.
    pub check_preconditions: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lambda: 1.0,
            tau: 0.0,
            c_lambda: 0.1,
            c_tau: 0.1,
            step: StepSize::Auto,
            backtracking: true,
            max_iter: 50_000,
            grad_tol: None,
            init: None,
            record_trace: false,
            check_preconditions: true,
        }
    }
}

impl FitConfig {
    pub fn new(lambda: f64, tau: f64) -> Self {
        FitConfig { lambda, tau, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        check_penalties(self.lambda, self.tau)?;
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if let Some(tol) = self.grad_tol {
            if tol.is_nan() || tol <= 0.0 {
                return Err(Error::invalid(format!("grad_tol must be positive, got {tol}")));
            }
        }
        if let StepSize::Fixed(eta) = self.step {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::invalid(format!("step size must be positive, got {eta}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Params,
    pub support: Vec<usize>,
    pub iterations: usize,
    /// `|theta_{t+1} - theta_t| / eta` at the last step.
    pub residual: f64,
    pub tolerance: f64,
    pub converged: bool,
    /// Step size in force at the end (after any backtracking).
    pub step_size: f64,
    pub objective: f64,
    pub lambda: f64,
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
}

/// Connectivity and design checks required before fitting.
pub fn check_fit_preconditions(dataset: &ComparisonDataset) -> Result<()> {
    let g = ComparisonGraph::of_dataset(dataset);
    let components = graph::component_count(&g);
    if components != 1 {
        return Err(Error::Disconnected { components });
    }
    let verdict = model::check_identifiability(SparsityBudget { k: 0 }, dataset.covariates());
    if !verdict.passed() {
        return Err(Error::invalid(format!("design is not identifiable: {verdict:?}")));
    }
    Ok(())
}

/// Prox-gradient fixed-point residual
/// `|SOFT_{eta lambda}(theta - eta grad) - theta| / eta` of the smooth part
/// `loss + tau/2 |.|^2`.
pub fn kkt_residual(params: &Params, dataset: &ComparisonDataset, lambda: f64, tau: f64, eta: f64) -> f64 {
    let theta = params.stacked();
    let (_, g) = loss_and_gradient(params, dataset);
    let step = &theta - (g + &theta * tau) * eta;
    let next = soft_threshold_block(&step, dataset.n(), eta * lambda);
    (next - theta).norm() / eta
}

/// Default step size for a given ridge weight at `params`.
pub fn auto_step_size(params: &Params, dataset: &ComparisonDataset, tau: f64) -> f64 {
    let lmax = hessian_spectral_norm(params, dataset, 1e-6, 2000);
    let denom = 2.0 * tau + 1.05 * lmax;
    if denom > 0.0 {
        2.0 / denom
    } else {
        1.0
    }
}

const DIVERGENCE_PATIENCE: usize = 10;
const MAX_HALVINGS: usize = 60;

pub fn fit(dataset: &ComparisonDataset, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if config.check_preconditions {
        check_fit_preconditions(dataset)?;
    }
    let n = dataset.n();
    let (lambda, tau) = (config.lambda, config.tau);

    let mut params = match &config.init {
        Some(p) if p.n() == n && p.d() == dataset.d() && p.is_finite() => p.clone(),
        Some(_) => return Err(Error::invalid("warm start has the wrong shape or non-finite entries")),
        None => Params::zeros(n, dataset.d()),
    };
    let mut theta = params.stacked();
    let (mut smooth, mut grad) = loss_and_gradient(&params, dataset);
    let tolerance = config.grad_tol.unwrap_or(1e-8 * (1.0 + grad.norm()));
    let mut eta = match config.step {
        StepSize::Auto => auto_step_size(&params, dataset, tau),
        StepSize::Fixed(eta) => eta,
    };
    let mut objective = smooth + penalty(&params, lambda, tau);
    let mut trace = config.record_trace.then(|| vec![objective]);

    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut increases = 0;
    let mut converged = false;

    while iterations < config.max_iter {
        iterations += 1;
        let smooth_grad = &grad + &theta * tau;
        let mut halvings = 0;
        let (next, next_params, next_smooth, next_grad, next_obj) = loop {
            let next = soft_threshold_block(&(&theta - &smooth_grad * eta), n, eta * lambda);
            let next_params = Params::from_stacked(&next, n);
            let (s, g) = loss_and_gradient(&next_params, dataset);
            let obj = s + penalty(&next_params, lambda, tau);
            let slack = 1e-12 * (1.0 + objective.abs());
            if config.backtracking && obj > objective + slack && halvings < MAX_HALVINGS {
                eta *= 0.5;
                halvings += 1;
                continue;
            }
            break (next, next_params, s, g, obj);
        };
        if !next_obj.is_finite() {
            return Err(Error::Solver { message: "objective became non-finite".into(), step_size: eta });
        }
        if next_obj > objective + 1e-8 {
            increases += 1;
            if increases >= DIVERGENCE_PATIENCE {
                return Err(Error::Solver {
                    message: format!("objective increased for {DIVERGENCE_PATIENCE} consecutive steps"),
                    step_size: eta,
                });
            }
        } else {
            increases = 0;
        }
        residual = (&next - &theta).norm() / eta;
        theta = next;
        params = next_params;
        smooth = next_smooth;
        grad = next_grad;
        objective = next_obj;
        if let Some(t) = trace.as_mut() {
            t.push(objective);
        }
        if residual <= tolerance {
            converged = true;
            break;
        }
    }
    let _ = smooth;

    Ok(FitResult {
        support: params.support(),
        params,
        iterations,
        residual,
        tolerance,
        converged,
        step_size: eta,
        objective,
        lambda,
        tau,
        trace,
    })
}
