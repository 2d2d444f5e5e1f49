//! Debiasing, the multiplier bootstrap, goodness-of-fit testing and rank
//! confidence intervals.

pub mod bootstrap;
pub mod debias;
pub mod gof;
pub mod rank;

pub use bootstrap::{
    collapsed_edge_draw, collapsed_sd, monte_carlo_p_value, per_trial_edge_draw, BootstrapSpec, ResidualBasis, Sampler,
};
pub use debias::{debias_alpha, DebiasedScores};
pub use gof::{gof_bootstrap, gof_statistic, gof_test, GofReport};
pub use rank::{
    one_sided_rank, plug_in_ranks, rank_ci, rank_threshold_test, topk_screen, topk_screen_at, IntervalKind,
    PairwiseInterval, RankInterval, RankReport, ScoreModel, Stage, ThresholdDecision, TopKScreen,
};
