use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_truth, simulate_comparisons, AlphaLaw, Scenario, Trials, Truth};
use crate::error::{Error, Result};
use crate::graph::sample_er_graph;
use crate::inference::debias::debias_at;
use crate::inference::gof::gof_test_unchecked;
use crate::inference::{rank_ci, BootstrapSpec, ScoreModel, Stage};
use crate::model::ComparisonDataset;
use crate::rng;
use crate::solver::{fit, two_stage_refit, FitConfig, FitResult};
use crate::stats::{ks_statistic, mean, normal_cdf, std_dev};

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start {t} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn check_common(reps: usize, lambda: f64, tau: f64) -> Result<()> {
    if reps == 0 {
        return Err(Error::invalid("repetition count must be at least 1"));
    }
    FitConfig::new(lambda, tau).validate()
}

/// Graph and outcomes of repetition `rep`, both seeded by the child seed.
fn draw_dataset(scenario: &Scenario, truth: &Truth, rep: usize) -> Result<(u64, ComparisonDataset)> {
    let seed = rng::derive(scenario.seed, rep as u64);
    let graph = sample_er_graph(scenario.n, scenario.p, seed)?;
    let ds = simulate_comparisons(truth, &graph, &Trials::Constant(scenario.trials), seed)?;
    Ok((seed, ds))
}

fn fit_rep(ds: &ComparisonDataset, lambda: f64, tau: f64, rep: usize) -> Result<FitResult> {
    fit(ds, &FitConfig::new(lambda, tau)).map_err(|e| match e {
        Error::Disconnected { components } => {
            Error::InvalidInput(format!("repetition {rep}: comparison graph has {components} components"))
        }
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityConfig {
    pub scenario: Scenario,
    pub lambda: f64,
    pub tau: f64,
    pub reps: usize,
    /// Item whose debiased score is standardised; `None` for the first
    /// support item.
    pub item: Option<usize>,
    /// Covariate coefficient that is standardised.
    pub beta_index: usize,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityRow {
    pub rep: usize,
    pub rv1: f64,
    pub rv2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalitySummary {
    pub reps: usize,
    pub item: usize,
    pub beta_index: usize,
    pub ks_rv1: f64,
    pub ks_rv2: f64,
    pub mean_rv1: f64,
    pub sd_rv1: f64,
    pub mean_rv2: f64,
    pub sd_rv2: f64,
    pub unconverged_fits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityOutput {
    pub rows: Vec<NormalityRow>,
    pub summary: NormalitySummary,
}

/// Standardised debiased `alpha_item` and `beta_index` across repetitions.
pub fn run_normality_experiment(config: &NormalityConfig) -> Result<NormalityOutput> {
    check_common(config.reps, config.lambda, config.tau)?;
    let s = &config.scenario;
    let truth = generate_truth(s)?;
    let item = match config.item {
        Some(i) if i < s.n => i,
        Some(i) => return Err(Error::invalid(format!("item {i} out of range for n = {}", s.n))),
        None => *truth.support.first().ok_or_else(|| Error::invalid("scenario has an empty support"))?,
    };
    if config.beta_index >= s.d {
        return Err(Error::invalid(format!("covariate index {} out of range for d = {}", config.beta_index, s.d)));
    }
    let results: Result<Vec<(NormalityRow, bool)>> = with_threads(config.threads, || {
        (0..config.reps)
            .into_par_iter()
            .map(|rep| {
                let (_, ds) = draw_dataset(s, &truth, rep)?;
                let r = fit_rep(&ds, config.lambda, config.tau, rep)?;
                let db = debias_at(&r.params, &ds)?;
                let rv1 = db.standardized(item, truth.params.alpha[item]);
                let rv2 = db.standardized_beta(config.beta_index, truth.params.beta[config.beta_index]);
                Ok((NormalityRow { rep, rv1, rv2 }, r.converged))
            })
            .collect()
    })?;
    let results = results?;
    let unconverged_fits = results.iter().filter(|(_, c)| !c).count();
    let rows: Vec<NormalityRow> = results.into_iter().map(|(row, _)| row).collect();
    let rv1: Vec<f64> = rows.iter().map(|r| r.rv1).collect();
    let rv2: Vec<f64> = rows.iter().map(|r| r.rv2).collect();
    let summary = NormalitySummary {
        reps: config.reps,
        item,
        beta_index: config.beta_index,
        ks_rv1: ks_statistic(&rv1, normal_cdf),
        ks_rv2: ks_statistic(&rv2, normal_cdf),
        mean_rv1: mean(&rv1),
        sd_rv1: std_dev(&rv1),
        mean_rv2: mean(&rv2),
        sd_rv2: std_dev(&rv2),
        unconverged_fits,
    };
    Ok(NormalityOutput { rows, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    /// The alpha law is replaced by the signal-level law for each `rho`.
    pub scenario: Scenario,
    pub lambda: f64,
    pub tau: f64,
    pub rhos: Vec<f64>,
    pub reps: usize,
    pub b: usize,
    pub alpha_level: f64,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub rho: f64,
    pub rep: usize,
    #[serde(rename = "T1")]
    pub t1: f64,
    pub c: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSummary {
    pub rho: f64,
    pub reps: usize,
    pub rejection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerOutput {
    pub rows: Vec<PowerRow>,
    pub summary: Vec<PowerSummary>,
}

/// Goodness-of-fit rejection rates over a grid of signal levels.
/// Repetition `r` uses the same child seed at every level.
pub fn run_power_experiment(config: &PowerConfig) -> Result<PowerOutput> {
    check_common(config.reps, config.lambda, config.tau)?;
    BootstrapSpec::new(config.b, config.alpha_level, 0).validate()?;
    if config.rhos.is_empty() {
        return Err(Error::invalid("signal grid must be nonempty"));
    }
    let mut rows = Vec::with_capacity(config.rhos.len() * config.reps);
    let mut summary = Vec::with_capacity(config.rhos.len());
    for &rho in &config.rhos {
        let scenario = Scenario { alpha_law: AlphaLaw::SignalLevel { rho }, ..config.scenario.clone() };
        let truth = generate_truth(&scenario)?;
        let level: Result<Vec<PowerRow>> = with_threads(config.threads, || {
            (0..config.reps)
                .into_par_iter()
                .map(|rep| {
                    let (seed, ds) = draw_dataset(&scenario, &truth, rep)?;
                    let r = fit_rep(&ds, config.lambda, config.tau, rep)?;
                    let report = gof_test_unchecked(&r, &ds, &BootstrapSpec::new(config.b, config.alpha_level, seed))?;
                    Ok(PowerRow { rho, rep, t1: report.statistic, c: report.critical_value, reject: report.reject })
                })
                .collect()
        })?;
        let level = level?;
        let rejections = level.iter().filter(|r| r.reject).count();
        summary.push(PowerSummary { rho, reps: config.reps, rejection_rate: rejections as f64 / config.reps as f64 });
        rows.extend(level);
    }
    Ok(PowerOutput { rows, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub scenario: Scenario,
    pub lambda: f64,
    pub tau: f64,
    /// Items examined one at a time, each with its own simultaneous
    /// interval over all comparisons `k != m`.
    pub items: Vec<usize>,
    pub reps: usize,
    pub b: usize,
    pub alpha_level: f64,
    pub two_stage: bool,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub item: usize,
    pub rep: usize,
    pub cover_theta: bool,
    pub cover_rank: bool,
    pub length: usize,
    pub stage: Stage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub item: usize,
    pub stage: Stage,
    pub true_rank: usize,
    pub reps: usize,
    pub ec_rank: f64,
    pub ec_theta: f64,
    pub mean_length: f64,
    pub sd_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageOutput {
    pub rows: Vec<CoverageRow>,
    pub summary: Vec<CoverageSummary>,
    pub support: Vec<SupportRow>,
}

fn coverage_rows(
    model: &ScoreModel,
    truth_scores: &nalgebra::DVector<f64>,
    true_ranks: &[usize],
    items: &[usize],
    rep: usize,
    spec: &BootstrapSpec,
) -> Result<Vec<CoverageRow>> {
    let mut rows = Vec::with_capacity(items.len());
    for &m in items {
        let report = rank_ci(model, &[m], spec)?;
        let interval = report.intervals[0];
        let cover_theta = report.pairwise[0].iter().all(|pi| {
            let diff = truth_scores[pi.k] - truth_scores[m];
            pi.lower <= diff && diff <= pi.upper
        });
        rows.push(CoverageRow {
            item: m,
            rep,
            cover_theta,
            cover_rank: interval.contains(true_ranks[m]),
            length: interval.length(),
            stage: model.stage(),
        });
    }
    Ok(rows)
}

/// Coverage of rank and score-difference intervals, with the new
/// covariates equal to the fitted ones.
pub fn run_coverage_experiment(config: &CoverageConfig) -> Result<CoverageOutput> {
    check_common(config.reps, config.lambda, config.tau)?;
    BootstrapSpec::new(config.b, config.alpha_level, 0).validate()?;
    let s = &config.scenario;
    if config.items.is_empty() || config.items.iter().any(|&m| m >= s.n) {
        return Err(Error::invalid(format!("items must be a nonempty subset of 0..{}", s.n)));
    }
    let truth = generate_truth(s)?;
    let truth_scores = truth.scores(None);
    let true_ranks = truth.ranks(None);
    let per_rep: Result<Vec<(Vec<CoverageRow>, SupportRow)>> = with_threads(config.threads, || {
        (0..config.reps)
            .into_par_iter()
            .map(|rep| {
                let (seed, ds) = draw_dataset(s, &truth, rep)?;
                let r = fit_rep(&ds, config.lambda, config.tau, rep)?;
                let spec = BootstrapSpec::new(config.b, config.alpha_level, seed);
                let one = ScoreModel::one_stage_unchecked(&ds, &r, None)?;
                let mut rows = coverage_rows(&one, &truth_scores, &true_ranks, &config.items, rep, &spec)?;
                if config.two_stage {
                    let refit = two_stage_refit(&ds, &r.support)?;
                    let two = ScoreModel::two_stage(&ds, &refit, None)?;
                    rows.extend(coverage_rows(&two, &truth_scores, &true_ranks, &config.items, rep, &spec)?);
                }
                Ok((rows, SupportRow::new(rep, &r.support, &truth.support, r.converged)))
            })
            .collect()
    })?;
    let (nested, support): (Vec<Vec<CoverageRow>>, Vec<SupportRow>) = per_rep?.into_iter().unzip();
    let rows: Vec<CoverageRow> = nested.into_iter().flatten().collect();

    let mut stages = vec![Stage::OneStage];
    if config.two_stage {
        stages.push(Stage::TwoStage);
    }
    let mut summary = Vec::new();
    for stage in stages {
        for &m in &config.items {
            let sel: Vec<&CoverageRow> = rows.iter().filter(|r| r.item == m && r.stage == stage).collect();
            let count = sel.len() as f64;
            let lengths: Vec<f64> = sel.iter().map(|r| r.length as f64).collect();
            summary.push(CoverageSummary {
                item: m,
                stage,
                true_rank: true_ranks[m],
                reps: sel.len(),
                ec_rank: sel.iter().filter(|r| r.cover_rank).count() as f64 / count,
                ec_theta: sel.iter().filter(|r| r.cover_theta).count() as f64 / count,
                mean_length: mean(&lengths),
                sd_length: std_dev(&lengths),
            });
        }
    }
    Ok(CoverageOutput { rows, summary, support })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportConfig {
    pub scenario: Scenario,
    pub lambda: f64,
    pub tau: f64,
    pub reps: usize,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportRow {
    pub rep: usize,
    pub size: usize,
    pub exact: bool,
    pub subset: bool,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub converged: bool,
}

impl SupportRow {
    fn new(rep: usize, estimated: &[usize], truth: &[usize], converged: bool) -> Self {
        let false_positives = estimated.iter().filter(|i| truth.binary_search(i).is_err()).count();
        let false_negatives = truth.iter().filter(|i| estimated.binary_search(i).is_err()).count();
        SupportRow {
            rep,
            size: estimated.len(),
            exact: false_positives == 0 && false_negatives == 0,
            subset: false_positives == 0,
            false_positives,
            false_negatives,
            converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportOutput {
    pub rows: Vec<SupportRow>,
    pub exact: usize,
    pub subset: usize,
}

/// Support of the penalised fit against the true support.
pub fn run_support_experiment(config: &SupportConfig) -> Result<SupportOutput> {
    check_common(config.reps, config.lambda, config.tau)?;
    let s = &config.scenario;
    let truth = generate_truth(s)?;
    let rows: Result<Vec<SupportRow>> = with_threads(config.threads, || {
        (0..config.reps)
            .into_par_iter()
            .map(|rep| {
                let (_, ds) = draw_dataset(s, &truth, rep)?;
                let r = fit_rep(&ds, config.lambda, config.tau, rep)?;
                Ok(SupportRow::new(rep, &r.support, &truth.support, r.converged))
            })
            .collect()
    })?;
    let rows = rows?;
    let exact = rows.iter().filter(|r| r.exact).count();
    let subset = rows.iter().filter(|r| r.subset).count();
    Ok(SupportOutput { rows, exact, subset })
}
