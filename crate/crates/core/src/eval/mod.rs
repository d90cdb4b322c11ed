//! Top-k ranking evaluation and internal baselines.

mod metrics;
mod report;

pub use metrics::{ndcg_at_k, rank_items, recall_at_k, top_k_by_scores};
pub use report::{
    evaluate_embeddings, evaluate_popularity, evaluate_ranker, popularity_baseline, reports_csv, KMetrics, MetricReport,
    REPORT_CSV_HEADER,
};
