//! Benchmark fixtures.

use covrank_core::graph::sample_er_graph;
use covrank_core::simulate::{generate_truth, simulate_comparisons, Scenario, Trials, Truth};
use covrank_core::{rng, ComparisonDataset, Result};

pub struct Instance {
    pub truth: Truth,
    pub dataset: ComparisonDataset,
}

/// One draw of the scenario `(n, d = 3, k = 5, p = 0.5, L = trials)`.
pub fn instance(n: usize, trials: u64, seed: u64) -> Result<Instance> {
    let scenario = Scenario::new(n, 3, 5, 0.5, trials, seed);
    let truth = generate_truth(&scenario)?;
    let data_seed = rng::derive(seed, 0);
    let graph = sample_er_graph(n, scenario.p, data_seed)?;
    let dataset = simulate_comparisons(&truth, &graph, &Trials::Constant(trials), data_seed)?;
    Ok(Instance { truth, dataset })
}
