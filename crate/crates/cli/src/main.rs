//! `covrank`: fit, test and rank with the sparse covariate-assisted BTL model.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "covrank", version, about = "Sparse covariate-assisted Bradley-Terry-Luce ranking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Master seed; every random draw of the run derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replicate-level parallelism; results do not
    /// depend on it. Defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
    /// key = value file supplying defaults; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct BootstrapArgs {
    /// Bootstrap replicates used for the critical value.
    #[arg(long = "B")]
    b: Option<usize>,
    /// Significance level; intervals have coverage 1 - alpha.
    #[arg(long)]
    alpha: Option<f64>,
    /// Draw one multiplier per trial instead of one per compared pair.
    #[arg(long)]
    per_trial: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic dataset and write covariates, comparisons and truth.
    Simulate(SimulateArgs),
    /// Penalised maximum likelihood fit.
    Fit(FitArgs),
    /// One-step corrected intrinsic scores of a saved fit.
    Debias(DebiasArgs),
    /// Bootstrap test of whether covariates explain all preferences.
    Gof(GofArgs),
    /// Simultaneous confidence intervals for ranks.
    RankCi(RankCiArgs),
    /// Items that may rank among the top K, or a test of one item's rank.
    Topk(TopkArgs),
    /// Normality of standardised debiased estimates over repetitions.
    BenchNormality(BenchArgs),
    /// Goodness-of-fit rejection rates over signal levels.
    BenchPower(BenchArgs),
    /// Coverage and length of rank intervals over repetitions.
    BenchCoverage(BenchArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Take the scenario of a bundled experiment (fig1, fig3, table1).
    #[arg(long)]
    preset: Option<String>,
    /// Number of items.
    #[arg(long)]
    n: Option<usize>,
    /// Covariate dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Number of items with a nonzero intrinsic score.
    #[arg(long)]
    k: Option<usize>,
    /// Probability that a pair is compared.
    #[arg(long)]
    p: Option<f64>,
    /// Comparisons per compared pair.
    #[arg(long)]
    trials: Option<u64>,
    /// Use the signal-level law for intrinsic scores at this level.
    #[arg(long)]
    rho: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// CSV with header item_id,x1,...,xd.
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// CSV with header item_i,item_j,wins_j,trials or winner,loser.
    #[arg(long)]
    comparisons: Option<PathBuf>,
    /// l1 weight on intrinsic scores; derived from the data when omitted.
    #[arg(long)]
    lambda: Option<f64>,
    /// Ridge weight; derived with lambda when both are omitted, else 0.
    #[arg(long)]
    tau: Option<f64>,
    /// Multiplier in the data-driven lambda.
    #[arg(long)]
    c_lambda: Option<f64>,
    /// Multiplier in the data-driven tau.
    #[arg(long)]
    c_tau: Option<f64>,
    /// Iteration cap for the solver.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Stationarity tolerance for the solver.
    #[arg(long)]
    grad_tol: Option<f64>,
    /// Restrict to the largest connected component instead of failing.
    #[arg(long)]
    lcc: bool,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DebiasArgs {
    /// Fit file written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GofArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    boot: BootstrapArgs,
    /// Fit file written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RankCiArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    boot: BootstrapArgs,
    /// Fit file written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// Items covered jointly, comma separated; all items when omitted.
    #[arg(long, value_delimiter = ',')]
    items: Vec<usize>,
    /// Covariates of the items at prediction time, same layout as the
    /// training covariates; the training covariates when omitted.
    #[arg(long)]
    new_covariates: Option<PathBuf>,
    /// Refit on the estimated support and drop intrinsic terms elsewhere.
    #[arg(long)]
    two_stage: bool,
    /// One-sided lower rank bounds instead of two-sided intervals.
    #[arg(long)]
    one_sided: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TopkArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    boot: BootstrapArgs,
    /// Fit file written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// Rank threshold K.
    #[arg(long = "K")]
    k: usize,
    /// Test whether this item ranks within the top K instead of screening.
    #[arg(long)]
    item: Option<usize>,
    #[arg(long)]
    new_covariates: Option<PathBuf>,
    #[arg(long)]
    two_stage: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Bundled settings: fig1 (normality), fig3 (power), table1 (coverage).
    #[arg(long)]
    preset: Option<String>,
    /// Repetitions; the preset's value when omitted.
    #[arg(long)]
    reps: Option<usize>,
    /// Bootstrap replicates per repetition.
    #[arg(long = "B")]
    b: Option<usize>,
    /// Fewer repetitions and replicates (power only).
    #[arg(long)]
    fast: bool,
    /// Directory for the CSV rows and summary JSON.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
