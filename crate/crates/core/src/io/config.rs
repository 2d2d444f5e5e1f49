//! Plain-text run configuration, one `key = value` per line.
//!
//! `#` starts a comment; blank lines are ignored. Unknown keys, repeated
//! keys and malformed values are all reported together.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::inference::{BootstrapSpec, Sampler};
use crate::simulate::Preset;
use crate::solver::{FitConfig, StepSize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Normality,
    Power,
    Coverage,
}

impl ExperimentKind {
    fn name(self) -> &'static str {
        match self {
            ExperimentKind::Normality => "normality",
            ExperimentKind::Power => "power",
            ExperimentKind::Coverage => "coverage",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub covariates: Option<PathBuf>,
    pub comparisons: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub fit: FitConfig,
    pub bootstrap: BootstrapSpec,
    pub experiment: Option<ExperimentKind>,
    pub preset: Option<Preset>,
    pub reps: Option<usize>,
    pub rhos: Option<Vec<f64>>,
    pub items: Option<Vec<usize>>,
    pub two_stage: bool,
    pub fast: bool,
    pub seed: u64,
    pub threads: Option<usize>,
    pub lcc: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            covariates: None,
            comparisons: None,
            output_dir: None,
            fit: FitConfig::default(),
            bootstrap: BootstrapSpec::new(200, 0.05, 0),
            experiment: None,
            preset: None,
            reps: None,
            rhos: None,
            items: None,
            two_stage: true,
            fast: false,
            seed: 0,
            threads: None,
            lcc: false,
        }
    }
}

const KEYS: &[&str] = &[
    "covariates",
    "comparisons",
    "output_dir",
    "lambda",
    "tau",
    "c_lambda",
    "c_tau",
    "step",
    "backtracking",
    "max_iter",
    "grad_tol",
    "check_preconditions",
    "bootstrap_b",
    "alpha_level",
    "bootstrap_seed",
    "sampler",
    "experiment",
    "preset",
    "reps",
    "rhos",
    "items",
    "two_stage",
    "fast",
    "seed",
    "threads",
    "lcc",
];

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn parse_list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_num(s.trim())).collect()
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut problems = Vec::new();
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!("line {line_no}: expected `key = value`"));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                problems.push(format!("line {line_no}: unknown key `{key}`"));
                continue;
            };
            if seen.contains(&known) {
                problems.push(format!("line {line_no}: key `{key}` given more than once"));
                continue;
            }
            seen.push(known);
            if let Err(msg) = cfg.set(known, value) {
                problems.push(format!("line {line_no}: `{key}`: {msg}"));
            }
        }
        if let Err(e) = cfg.fit.validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = cfg.bootstrap.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(problems))
        }
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "covariates" => self.covariates = Some(PathBuf::from(v)),
            "comparisons" => self.comparisons = Some(PathBuf::from(v)),
            "output_dir" => self.output_dir = Some(PathBuf::from(v)),
            "lambda" => self.fit.lambda = parse_num(v)?,
            "tau" => self.fit.tau = parse_num(v)?,
            "c_lambda" => self.fit.c_lambda = parse_num(v)?,
            "c_tau" => self.fit.c_tau = parse_num(v)?,
            "step" => {
                self.fit.step = if v == "auto" { StepSize::Auto } else { StepSize::Fixed(parse_num(v)?) };
            }
            "backtracking" => self.fit.backtracking = parse_bool(v)?,
            "max_iter" => self.fit.max_iter = parse_num(v)?,
            "grad_tol" => self.fit.grad_tol = Some(parse_num(v)?),
            "check_preconditions" => self.fit.check_preconditions = parse_bool(v)?,
            "bootstrap_b" => self.bootstrap.b = parse_num(v)?,
            "alpha_level" => self.bootstrap.alpha_level = parse_num(v)?,
            "bootstrap_seed" => self.bootstrap.seed = parse_num(v)?,
            "sampler" => {
                self.bootstrap.sampler = match v {
                    "collapsed" => Sampler::Collapsed,
                    "per_trial" => Sampler::PerTrial,
                    _ => return Err(format!("expected collapsed or per_trial, got `{v}`")),
                }
            }
            "experiment" => {
                self.experiment = Some(match v {
                    "normality" => ExperimentKind::Normality,
                    "power" => ExperimentKind::Power,
                    "coverage" => ExperimentKind::Coverage,
                    _ => return Err(format!("expected normality, power or coverage, got `{v}`")),
                })
            }
            "preset" => self.preset = Some(v.parse()?),
            "reps" => self.reps = Some(parse_num(v)?),
            "rhos" => self.rhos = Some(parse_list(v)?),
            "items" => self.items = Some(parse_list(v)?),
            "two_stage" => self.two_stage = parse_bool(v)?,
            "fast" => self.fast = parse_bool(v)?,
            "seed" => self.seed = parse_num(v)?,
            "threads" => self.threads = Some(parse_num(v)?),
            "lcc" => self.lcc = parse_bool(v)?,
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        Ok(())
    }

    /// Renders every field; `parse` of the output gives back `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        if let Some(p) = path(&self.covariates) {
            put("covariates", p);
        }
        if let Some(p) = path(&self.comparisons) {
            put("comparisons", p);
        }
        if let Some(p) = path(&self.output_dir) {
            put("output_dir", p);
        }
        put("lambda", self.fit.lambda.to_string());
        put("tau", self.fit.tau.to_string());
        put("c_lambda", self.fit.c_lambda.to_string());
        put("c_tau", self.fit.c_tau.to_string());
        put(
            "step",
            match self.fit.step {
                StepSize::Auto => "auto".into(),
                StepSize::Fixed(eta) => eta.to_string(),
            },
        );
        put("backtracking", self.fit.backtracking.to_string());
        put("max_iter", self.fit.max_iter.to_string());
        if let Some(t) = self.fit.grad_tol {
            put("grad_tol", t.to_string());
        }
        put("check_preconditions", self.fit.check_preconditions.to_string());
        put("bootstrap_b", self.bootstrap.b.to_string());
        put("alpha_level", self.bootstrap.alpha_level.to_string());
        put("bootstrap_seed", self.bootstrap.seed.to_string());
        put(
            "sampler",
            match self.bootstrap.sampler {
                Sampler::Collapsed => "collapsed".into(),
                Sampler::PerTrial => "per_trial".into(),
            },
        );
        if let Some(e) = self.experiment {
            put("experiment", e.name().into());
        }
        if let Some(p) = self.preset {
            put("preset", p.name().into());
        }
        if let Some(r) = self.reps {
            put("reps", r.to_string());
        }
        if let Some(r) = &self.rhos {
            put("rhos", join(r));
        }
        if let Some(i) = &self.items {
            put("items", join(i));
        }
        put("two_stage", self.two_stage.to_string());
        put("fast", self.fast.to_string());
        put("seed", self.seed.to_string());
        if let Some(t) = self.threads {
            put("threads", t.to_string());
        }
        put("lcc", self.lcc.to_string());
        out
    }

    /// Paths that must exist before a run starts.
    fn check_paths(&self) -> Vec<String> {
        [("covariates", &self.covariates), ("comparisons", &self.comparisons)]
            .into_iter()
            .filter_map(|(k, p)| {
                p.as_ref().filter(|p| !p.exists()).map(|p| format!("`{k}`: {} does not exist", p.display()))
            })
            .collect()
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let cfg = RunConfig::parse(&text)?;
    let missing = cfg.check_paths();
    if missing.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(missing))
    }
}

pub fn write_config(config: &RunConfig, path: &Path) -> Result<()> {
    std::fs::write(path, config.to_text()).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::parse("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_and_bad_keys_are_all_listed() {
        let err = RunConfig::parse("lamda = 1\ntau = x\nseed = 3\nseed = 4\nnokey\n").unwrap_err();
        let Error::Config(list) = err else { panic!() };
        assert_eq!(list.len(), 4, "{list:?}");
        assert!(list[0].contains("`lamda`"));
        assert!(list[1].contains("`tau`"));
        assert!(list[2].contains("more than once"));
        assert!(list[3].contains("line 5"));
        let Error::Config(list) = RunConfig::parse("lambda = -1\nbootstrap_b = 0").unwrap_err() else { panic!() };
        assert_eq!(list.len(), 2);
    }

    #[test]
    fn round_trip() {
        let text = "covariates = a.csv\nlambda = 0.30000000000000004\nstep = 0.125\nrhos = 0,1.5,3\nitems = 0,5\n\
                    preset = table1\nexperiment = coverage\nsampler = per_trial\nthreads = 2\nlcc = true\nfast = true\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.fit.lambda, 0.30000000000000004);
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(RunConfig::parse(&RunConfig::default().to_text()).unwrap(), RunConfig::default());
    }

    #[test]
    fn missing_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "covariates = /definitely/not/here.csv\n").unwrap();
        assert!(matches!(read_config(&p), Err(Error::Config(v)) if v.len() == 1));
    }
}
