//! Prediction metrics, likelihood ranking and top-k prediction.

mod metrics;
mod predict;
mod report;

pub use metrics::{
    ade, fde, likelihood_rank_curve, min_ade, min_fde, oracle_top_fraction, rank_by_likelihood,
    PredictionSet, RankPoint, Selection,
};
pub use predict::{predict_samples, top_k_predict, track_log_likelihood};
pub use report::{
    evaluate_windows, horizon_steps, write_metrics_report, write_rank_curve, MetricsSummary,
    WindowResult,
};
