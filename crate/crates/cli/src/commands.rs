use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use covrank_core::graph::{largest_component_restrict, sample_er_graph};
use covrank_core::inference::{
    debias_alpha, gof_test, one_sided_rank, rank_ci, rank_threshold_test, topk_screen, BootstrapSpec, DebiasedScores,
    Sampler, ScoreModel,
};
use covrank_core::io::{
    load_covariates, load_dataset, read_config, read_report, report_to_string, write_csv_rows, write_dataset,
    write_report, FitRecord, LoadReport, RunConfig, FIT_KIND,
};
use covrank_core::simulate::{
    generate_truth, preset_fig1, preset_fig3, preset_table1, run_coverage_experiment, run_normality_experiment,
    run_power_experiment, simulate_comparisons, AlphaLaw, Preset, Scenario, Trials, Truth,
};
use covrank_core::solver::{default_tuning, fit, pilot_kappa, two_stage_refit};
use covrank_core::{rng, ComparisonDataset, Error, FitConfig, Result};

use crate::{
    BenchArgs, BootstrapArgs, Command, Common, DebiasArgs, FitArgs, GofArgs, RankCiArgs, SimulateArgs, TopkArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Debias(a) => debias(a),
        Command::Gof(a) => gof(a),
        Command::RankCi(a) => rank_ci_cmd(a),
        Command::Topk(a) => topk(a),
        Command::BenchNormality(a) => bench(a, Preset::Fig1),
        Command::BenchPower(a) => bench(a, Preset::Fig3),
        Command::BenchCoverage(a) => bench(a, Preset::Table1),
    }
}

/// Config file values, if any, with the common flags applied on top.
struct Settings {
    file: Option<RunConfig>,
    cfg: RunConfig,
    seed: u64,
    threads: Option<usize>,
}

impl Settings {
    fn new(common: &Common) -> Result<Self> {
        let file = common.config.as_deref().map(read_config).transpose()?;
        let cfg = file.clone().unwrap_or_default();
        let seed = common.seed.unwrap_or(cfg.seed);
        let threads = common.threads.or(cfg.threads);
        if threads == Some(0) {
            return Err(Error::InvalidInput("--threads must be at least 1".into()));
        }
        if let Some(t) = threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .map_err(|e| Error::InvalidInput(format!("cannot start {t} worker threads: {e}")))?;
        }
        Ok(Settings { file, cfg, seed, threads })
    }

    fn bootstrap(&self, args: &BootstrapArgs, explicit_seed: Option<u64>) -> Result<BootstrapSpec> {
        let mut spec = self.cfg.bootstrap;
        if let Some(b) = args.b {
            spec.b = b;
        }
        if let Some(a) = args.alpha {
            spec.alpha_level = a;
        }
        if args.per_trial {
            spec.sampler = Sampler::PerTrial;
        }
        spec.seed = explicit_seed.unwrap_or(spec.seed);
        spec.validate()?;
        Ok(spec)
    }

    fn two_stage(&self, flag: bool) -> bool {
        flag || self.file.as_ref().is_some_and(|f| f.two_stage)
    }
}

fn emit<T: Serialize>(out: Option<&Path>, kind: &str, payload: &T) -> Result<()> {
    match out {
        Some(path) => write_report(path, kind, payload),
        None => {
            print!("{}", report_to_string(kind, payload)?);
            Ok(())
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn required(flag: Option<PathBuf>, from_file: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| from_file.clone())
        .ok_or_else(|| Error::InvalidInput(format!("--{name} is required (flag or config key `{name}`)")))
}

#[derive(Serialize)]
struct SimulationRecord<'a> {
    scenario: &'a Scenario,
    /// Seed of the graph and outcome draws; the truth uses `scenario.seed`.
    data_seed: u64,
    truth: &'a Truth,
    dataset: &'a LoadReport,
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let st = Settings::new(&a.common)?;
    let preset = a.preset.as_deref().map(str::parse::<Preset>).transpose().map_err(Error::InvalidInput)?;
    let mut s = match preset.or(st.cfg.preset) {
        Some(Preset::Fig1) => preset_fig1(st.seed).scenario,
        Some(Preset::Fig3) => preset_fig3(st.seed, false).scenario,
        Some(Preset::Table1) => preset_table1(st.seed).scenario,
        None => Scenario::new(100, 3, 5, 0.5, 160, st.seed),
    };
    s.n = a.n.unwrap_or(s.n);
    s.d = a.d.unwrap_or(s.d);
    s.k = a.k.unwrap_or(s.k);
    s.p = a.p.unwrap_or(s.p);
    s.trials = a.trials.unwrap_or(s.trials);
    if let Some(rho) = a.rho {
        s.alpha_law = AlphaLaw::SignalLevel { rho };
    }
    let truth = generate_truth(&s)?;
    let data_seed = rng::derive(s.seed, 0);
    let graph = sample_er_graph(s.n, s.p, data_seed)?;
    let ds = simulate_comparisons(&truth, &graph, &Trials::Constant(s.trials), data_seed)?;

    fs::create_dir_all(&a.out_dir).map_err(io_err(&a.out_dir))?;
    let cov = a.out_dir.join("covariates.csv");
    let cmp = a.out_dir.join("comparisons.csv");
    write_dataset(&ds, &cov, &cmp)?;
    let (_, report) = load_dataset(&cov, &cmp)?;
    let record = SimulationRecord { scenario: &s, data_seed, truth: &truth, dataset: &report };
    write_report(&a.out_dir.join("truth.json"), "simulation", &record)
}

/// The dataset a fit was computed on, renumbered the same way.
struct Fitted {
    record: FitRecord,
    dataset: ComparisonDataset,
}

impl Fitted {
    fn load(path: &Path) -> Result<Self> {
        let record: FitRecord = read_report(path, FIT_KIND)?;
        let (ds, _) = load_dataset(&record.covariates, &record.comparisons)?;
        let dataset = if record.lcc { largest_component_restrict(&ds)?.dataset } else { ds };
        if dataset.n() != record.n || dataset.d() != record.d || dataset.l_ref() != record.l_ref {
            return Err(Error::InvalidInput(format!(
                "{}: the data files no longer match the fit (n, d or trial scale changed)",
                path.display()
            )));
        }
        Ok(Fitted { record, dataset })
    }

    /// `original[fitted]`, when the fit renumbered items.
    fn original_ids(&self) -> Option<Vec<usize>> {
        self.record.index_map.as_ref().map(|map| {
            let mut ids = vec![0; self.dataset.n()];
            for (old, new) in map.iter().enumerate() {
                if let Some(new) = new {
                    ids[*new] = old;
                }
            }
            ids
        })
    }

    fn to_fitted(&self, item: usize) -> Result<usize> {
        match &self.record.index_map {
            None if item < self.dataset.n() => Ok(item),
            None => Err(Error::InvalidInput(format!("item {item} out of range for n = {}", self.dataset.n()))),
            Some(map) => map
                .get(item)
                .copied()
                .flatten()
                .ok_or_else(|| Error::InvalidInput(format!("item {item} is not in the fitted (largest) component"))),
        }
    }

    /// New covariates on the internal scale, rows restricted like the fit.
    fn new_covariates(&self, path: Option<&Path>) -> Result<Option<DMatrix<f64>>> {
        let Some(path) = path else { return Ok(None) };
        let raw = load_covariates(path)?;
        let raw = match &self.record.index_map {
            None => raw,
            Some(map) => {
                if raw.nrows() != map.len() {
                    return Err(Error::InvalidInput(format!(
                        "{}: {} rows, the fit's data had {}",
                        path.display(),
                        raw.nrows(),
                        map.len()
                    )));
                }
                let ids = self.original_ids().unwrap_or_default();
                DMatrix::from_fn(ids.len(), raw.ncols(), |r, c| raw[(ids[r], c)])
            }
        };
        Ok(Some(self.dataset.scale_new_covariates(&raw)?))
    }

    fn score_model(&self, two_stage: bool, z: Option<&DMatrix<f64>>) -> Result<ScoreModel> {
        if two_stage {
            let refit = two_stage_refit(&self.dataset, &self.record.result.support)?;
            ScoreModel::two_stage(&self.dataset, &refit, z)
        } else {
            ScoreModel::one_stage(&self.dataset, &self.record.result, z)
        }
    }
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    #[serde(flatten)]
    report: &'a T,
    /// `original_ids[i]` is the input id of fitted item `i`.
    #[serde(skip_serializing_if = "Option::is_none")]
    original_ids: Option<Vec<usize>>,
}

fn fit_cmd(a: FitArgs) -> Result<()> {
    let st = Settings::new(&a.common)?;
    let covariates = required(a.covariates, &st.cfg.covariates, "covariates")?;
    let comparisons = required(a.comparisons, &st.cfg.comparisons, "comparisons")?;
    let lcc = a.lcc || st.cfg.lcc;
    let (ds, _) = load_dataset(&covariates, &comparisons)?;
    let (ds, index_map) = if lcc {
        let r = largest_component_restrict(&ds)?;
        let map = (!r.is_identity()).then(|| r.index_map.clone());
        (r.dataset, map)
    } else {
        (ds, None)
    };

    let mut config: FitConfig = st.cfg.fit.clone();
    config.c_lambda = a.c_lambda.unwrap_or(config.c_lambda);
    config.c_tau = a.c_tau.unwrap_or(config.c_tau);
    config.max_iter = a.max_iter.unwrap_or(config.max_iter);
    config.grad_tol = a.grad_tol.or(config.grad_tol);
    match (a.lambda, st.file.is_some()) {
        (Some(lambda), _) => {
            config.lambda = lambda;
            config.tau = a.tau.unwrap_or(if st.file.is_some() { config.tau } else { 0.0 });
        }
        (None, true) => config.tau = a.tau.unwrap_or(config.tau),
        (None, false) => {
            let kappa = pilot_kappa(&ds)?;
            let (lambda, tau) = default_tuning(&ds, None, ds.l_ref(), kappa, config.c_lambda, config.c_tau);
            config.lambda = lambda;
            config.tau = a.tau.unwrap_or(tau);
        }
    }
    config.validate()?;
    let result = fit(&ds, &config)?;
    let absolute = |p: &Path| fs::canonicalize(p).map_err(io_err(p));
    let record = FitRecord {
        covariates: absolute(&covariates)?,
        comparisons: absolute(&comparisons)?,
        lcc,
        index_map,
        n: ds.n(),
        d: ds.d(),
        l_ref: ds.l_ref(),
        covariate_scale: ds.covariate_scale(),
        config,
        result,
    };
    emit(a.out.as_deref(), FIT_KIND, &record)
}

#[derive(Serialize)]
struct DebiasOutput<'a> {
    #[serde(flatten)]
    scores: &'a DebiasedScores,
    /// `1 / sqrt(H_ii L)`.
    standard_errors: Vec<f64>,
    /// `alpha_debiased_i / standard_error_i`.
    z_scores: Vec<f64>,
}

fn debias(a: DebiasArgs) -> Result<()> {
    let f = Fitted::load(&a.fit)?;
    let scores = debias_alpha(&f.record.result, &f.dataset)?;
    let n = f.dataset.n();
    let standard_errors = (0..n).map(|i| 1.0 / (scores.hessian_diag[i] * scores.l_ref).sqrt()).collect();
    let z_scores = (0..n).map(|i| scores.standardized(i, 0.0)).collect();
    let out = DebiasOutput { scores: &scores, standard_errors, z_scores };
    emit(a.out.as_deref(), "debias", &Tagged { report: &out, original_ids: f.original_ids() })
}

fn gof(a: GofArgs) -> Result<()> {
    let st = Settings::new(&a.common)?;
    let spec = st.bootstrap(&a.boot, a.common.seed)?;
    let f = Fitted::load(&a.fit)?;
    let report = gof_test(&f.record.result, &f.dataset, &spec)?;
    emit(a.out.as_deref(), "gof", &Tagged { report: &report, original_ids: f.original_ids() })
}

fn rank_ci_cmd(a: RankCiArgs) -> Result<()> {
    let st = Settings::new(&a.common)?;
    let spec = st.bootstrap(&a.boot, a.common.seed)?;
    let f = Fitted::load(&a.fit)?;
    let requested = if a.items.is_empty() { st.cfg.items.clone().unwrap_or_default() } else { a.items };
    let items: Vec<usize> = if requested.is_empty() {
        (0..f.dataset.n()).collect()
    } else {
        requested.iter().map(|&m| f.to_fitted(m)).collect::<Result<_>>()?
    };
    let z = f.new_covariates(a.new_covariates.as_deref())?;
    let model = f.score_model(st.two_stage(a.two_stage), z.as_ref())?;
    let report = if a.one_sided { one_sided_rank(&model, &items, &spec)? } else { rank_ci(&model, &items, &spec)? };
    emit(a.out.as_deref(), "rank_ci", &Tagged { report: &report, original_ids: f.original_ids() })
}

fn topk(a: TopkArgs) -> Result<()> {
    let st = Settings::new(&a.common)?;
    let spec = st.bootstrap(&a.boot, a.common.seed)?;
    let f = Fitted::load(&a.fit)?;
    let z = f.new_covariates(a.new_covariates.as_deref())?;
    let model = f.score_model(st.two_stage(a.two_stage), z.as_ref())?;
    let ids = f.original_ids();
    match a.item {
        Some(m) => {
            let decision = rank_threshold_test(&model, f.to_fitted(m)?, a.k, &spec)?;
            emit(a.out.as_deref(), "rank_threshold", &Tagged { report: &decision, original_ids: ids })
        }
        None => {
            let screen = topk_screen(&model, a.k, &spec)?;
            emit(a.out.as_deref(), "topk", &Tagged { report: &screen, original_ids: ids })
        }
    }
}

#[derive(Serialize)]
struct Summary<'a, T> {
    summary: &'a T,
}

/// Writes `<kind>.json` under `dir` and echoes it to stdout.
fn summarize<T: Serialize>(dir: &Path, kind: &str, summary: &T) -> Result<()> {
    let payload = Summary { summary };
    write_report(&dir.join(format!("{kind}.json")), kind, &payload)?;
    print!("{}", report_to_string(kind, &payload)?);
    Ok(())
}

fn bench(a: BenchArgs, kind: Preset) -> Result<()> {
    let st = Settings::new(&a.common)?;
    let preset = a.preset.as_deref().map(str::parse::<Preset>).transpose().map_err(Error::InvalidInput)?;
    if let Some(p) = preset.or(st.cfg.preset) {
        if p != kind {
            return Err(Error::InvalidInput(format!("preset `{}` does not belong to this experiment", p.name())));
        }
    }
    let reps = a.reps.or(st.cfg.reps);
    let fast = a.fast || st.cfg.fast;
    fs::create_dir_all(&a.out_dir).map_err(io_err(&a.out_dir))?;
    match kind {
        Preset::Fig1 => {
            if a.b.is_some() {
                return Err(Error::InvalidInput("--B does not apply to the normality experiment".into()));
            }
            let mut c = preset_fig1(st.seed);
            c.reps = reps.unwrap_or(c.reps);
            c.threads = st.threads;
            let out = run_normality_experiment(&c)?;
            write_csv_rows(&a.out_dir.join("normality.csv"), &out.rows)?;
            summarize(&a.out_dir, "normality_summary", &out.summary)?;
        }
        Preset::Fig3 => {
            let mut c = preset_fig3(st.seed, fast);
            c.reps = reps.unwrap_or(c.reps);
            c.b = a.b.unwrap_or(c.b);
            if let Some(r) = &st.cfg.rhos {
                c.rhos = r.clone();
            }
            c.threads = st.threads;
            let out = run_power_experiment(&c)?;
            write_csv_rows(&a.out_dir.join("power.csv"), &out.rows)?;
            summarize(&a.out_dir, "power_summary", &out.summary)?;
        }
        Preset::Table1 => {
            let mut c = preset_table1(st.seed);
            c.reps = reps.unwrap_or(c.reps);
            c.b = a.b.unwrap_or(c.b);
            if let Some(items) = &st.cfg.items {
                c.items = items.clone();
            }
            c.threads = st.threads;
            let out = run_coverage_experiment(&c)?;
            write_csv_rows(&a.out_dir.join("coverage.csv"), &out.rows)?;
            write_csv_rows(&a.out_dir.join("support.csv"), &out.support)?;
            summarize(&a.out_dir, "coverage_summary", &out.summary)?;
        }
    }
    Ok(())
}
