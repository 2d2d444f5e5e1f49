//! Bundled experiment settings.

use super::experiments::{CoverageConfig, NormalityConfig, PowerConfig};
use super::{AlphaLaw, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig1,
    Fig3,
    Table1,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig3 => "fig3",
            Preset::Table1 => "table1",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig1" => Ok(Preset::Fig1),
            "fig3" => Ok(Preset::Fig3),
            "table1" => Ok(Preset::Table1),
            other => Err(format!("unknown preset `{other}`; expected fig1, fig3 or table1")),
        }
    }
}

/// Normality of the debiased estimates: n = 200, d = 3, k = 5, p = 0.5,
/// L = 25, lambda = 3, 500 repetitions.
pub fn preset_fig1(seed: u64) -> NormalityConfig {
    NormalityConfig {
        scenario: Scenario::new(200, 3, 5, 0.5, 25, seed),
        lambda: 3.0,
        tau: 0.0,
        reps: 500,
        item: None,
        beta_index: 0,
        threads: None,
    }
}

/// Goodness-of-fit power over `rho = 0..=5`: n = 200, d = 3, k = 5, p = 0.5,
/// L = 160, lambda = 0.5, B = 200, 100 repetitions. `fast` uses 50
/// repetitions and B = 100.
pub fn preset_fig3(seed: u64, fast: bool) -> PowerConfig {
    let mut scenario = Scenario::new(200, 3, 5, 0.5, 160, seed);
    scenario.alpha_law = AlphaLaw::SignalLevel { rho: 0.0 };
    PowerConfig {
        scenario,
        lambda: 0.5,
        tau: 0.0,
        rhos: (0..=5).map(f64::from).collect(),
        reps: if fast { 50 } else { 100 },
        b: if fast { 100 } else { 200 },
        alpha_level: 0.05,
        threads: None,
    }
}

/// Rank interval coverage: n = 100, d = 3, k = 5, p = 0.5, L = 160,
/// lambda = 1, B = 200, 100 repetitions, items 0, 1, 2 (in the support) and
/// 5, 6, 7 (outside it).
pub fn preset_table1(seed: u64) -> CoverageConfig {
    CoverageConfig {
        scenario: Scenario::new(100, 3, 5, 0.5, 160, seed),
        lambda: 1.0,
        tau: 0.0,
        items: vec![0, 1, 2, 5, 6, 7],
        reps: 100,
        b: 200,
        alpha_level: 0.05,
        two_stage: true,
        threads: None,
    }
}
