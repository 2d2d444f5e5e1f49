use serde::{Deserialize, Serialize};

use super::{fit, FitConfig};
use crate::error::Result;
use crate::model::{condition_numbers, ComparisonDataset};

/// Plug-in values for the three condition numbers entering the default
/// penalty formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimates {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
}

/// Default `(lambda, tau)`:
///
/// ```text
/// lambda = c_lambda kappa1 sqrt((d + 1) n p log n / L)
/// tau    = c_tau min(kappa1 / kappa2, 1 / (kappa3 sqrt(d + 1))) sqrt(log n / (n L))
/// ```
///
/// A zero `kappa2` or `kappa3` removes its term from the minimum; with both
/// zero `tau` is 0. `p_hat` defaults to the observed edge density.
pub fn default_tuning(
    dataset: &ComparisonDataset,
    p_hat: Option<f64>,
    l_ref: f64,
    kappa: KappaEstimates,
    c_lambda: f64,
    c_tau: f64,
) -> (f64, f64) {
    let n = dataset.n() as f64;
    let d1 = (dataset.d() + 1) as f64;
    let p = p_hat.unwrap_or_else(|| dataset.edge_density());
    let log_n = n.ln();
    let lambda = c_lambda * kappa.kappa1 * (d1 * n * p * log_n / l_ref).sqrt();
    let first = if kappa.kappa2 > 0.0 { kappa.kappa1 / kappa.kappa2 } else { f64::INFINITY };
    let second = if kappa.kappa3 > 0.0 { 1.0 / (kappa.kappa3 * d1.sqrt()) } else { f64::INFINITY };
    let ratio = first.min(second);
    let tau = if ratio.is_finite() { c_tau * ratio * (log_n / (n * l_ref)).sqrt() } else { 0.0 };
    (lambda, tau)
}

/// Condition numbers from a pilot fit with
/// `lambda = 0.1 sqrt((d + 1) n p log n / L)` and `tau = 0`.
pub fn pilot_kappa(dataset: &ComparisonDataset) -> Result<KappaEstimates> {
    let unit = KappaEstimates { kappa1: 1.0, kappa2: 0.0, kappa3: 0.0 };
    let (lambda, _) = default_tuning(dataset, None, dataset.l_ref(), unit, 0.1, 0.0);
    let pilot = fit(dataset, &FitConfig::new(lambda, 0.0))?;
    let (kappa1, kappa2, kappa3) = condition_numbers(&pilot.params, dataset);
    Ok(KappaEstimates { kappa1, kappa2, kappa3 })
}
