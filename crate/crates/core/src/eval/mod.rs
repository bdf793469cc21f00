//! Benchmark loading, detection and reduction metrics, threshold search.

pub mod dataset;
pub mod metrics;
pub mod sweep;

pub use dataset::{
    binarize_consistency, load_dataset, load_gold, load_scores, parse_dataset, parse_gold,
    parse_scores, DataError, DatasetFormat, GoldLabel, LabeledPair, LoadIssue, LoadReport,
    ScoreFile, ScoredPair,
};
pub use metrics::{
    bleu4, f1_macro, f1_per_class, rouge_l, rouge_n, zero_hallucination_rate, ConfusionCounts,
    DetectionMetrics, MetricError, OverlapScores,
};
pub use sweep::{
    f1_at, predict, sweep_threshold, sweep_threshold_multi, threshold_grid, SweepError,
};
