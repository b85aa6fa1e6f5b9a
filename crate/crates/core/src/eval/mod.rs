//! Ranking metrics, sampled-negative evaluation and the analysis reports.

mod evaluate;
mod metrics;
mod reports;
mod strata;

pub use evaluate::{
    evaluate, rank_targets, sample_candidates, summarize, EvalConfig, EvalReport, MetricRow, NegativePool,
    OracleScorer, Outcome, Query, RandomScorer, Scorer,
};
pub use metrics::{
    hits_at_k, ndcg_at_k, ndcg_from_rank, rank_by_score, rank_candidates, rank_of, recall_at_k, recall_from_rank,
};
pub use reports::{
    moving_average, overhead_report, tail_mean, weight_trajectory_report, write_json, OverheadReport, OverheadRow,
    RunTrajectory, TimedRun, TrajectoryReport, OVERHEAD_MIN_STEPS, OVERHEAD_WARMUP,
};
pub use strata::{AttentionStats, StrataTable, Stratum, StratumRow};
