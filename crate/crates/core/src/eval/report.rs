//! Per-user averaged evaluation over a held-out split.

use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;

use super::metrics::{ndcg_at_k, recall_at_k, top_k_by_scores};
use crate::data::InteractionGraph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMetrics {
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub split: String,
    pub seed: u64,
    pub n_users: usize,
    pub metrics: Vec<KMetrics>,
    /// Not written to CSV, which must be reproducible.
    pub wall_time_secs: f64,
}

pub const REPORT_CSV_HEADER: &str = "split,k,recall,ndcg,n_users,seed";

impl MetricReport {
    pub fn at(&self, k: usize) -> Option<KMetrics> {
        self.metrics.iter().copied().find(|m| m.k == k)
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        self.at(k).map(|m| m.ndcg)
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.metrics
            .iter()
            .map(|m| format!("{},{},{:.6},{:.6},{},{}", self.split, m.k, m.recall, m.ndcg, self.n_users, self.seed))
            .collect()
    }
}

/// CSV document for several reports under one header.
pub fn reports_csv<'a>(reports: impl IntoIterator<Item = &'a MetricReport>) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        for row in r.csv_rows() {
            out.push_str(&row);
            out.push('\n');
        }
    }
    out
}

/// Evaluates users that have at least one interaction in `target`.
/// `ranker(u, exclude, k)` must return at most `k` items, none of them in the
/// sorted slice `exclude` (the user's train items).
pub fn evaluate_ranker<F>(
    train: &InteractionGraph,
    target: &InteractionGraph,
    ks: &[usize],
    split: &str,
    seed: u64,
    ranker: F,
) -> Result<MetricReport>
where
    F: Fn(usize, &[usize], usize) -> Vec<usize> + Sync,
{
    let start = Instant::now();
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config("cutoffs must be positive".into()));
    }
    if train.n_users() != target.n_users() || train.n_items() != target.n_items() {
        return Err(Error::Shape("train and evaluation splits use different id spaces".into()));
    }
    let k_max = *ks.iter().max().expect("non-empty");
    let seen = train.user_items();
    let relevant = target.user_items();
    let per_user: Vec<Vec<(f64, f64)>> = (0..target.n_users())
        .into_par_iter()
        .filter(|&u| !relevant[u].is_empty())
        .map(|u| {
            let ranked = ranker(u, &seen[u], k_max);
            debug_assert!(ranked.iter().all(|i| seen[u].binary_search(i).is_err()));
            ks.iter()
                .map(|&k| (recall_at_k(&ranked, &relevant[u], k), ndcg_at_k(&ranked, &relevant[u], k)))
                .collect()
        })
        .collect();
    if per_user.is_empty() {
        return Err(Error::Data(format!("no user has interactions in the {split} split")));
    }
    let n = per_user.len() as f64;
    let metrics = ks
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let (r, g) = per_user.iter().fold((0.0, 0.0), |(r, g), m| (r + m[j].0, g + m[j].1));
            KMetrics {
                k,
                recall: r / n,
                ndcg: g / n,
            }
        })
        .collect();
    Ok(MetricReport {
        split: split.to_string(),
        seed,
        n_users: per_user.len(),
        metrics,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Dot-product ranking of all non-train items.
pub fn evaluate_embeddings(
    users: &Array2<f64>,
    items: &Array2<f64>,
    train: &InteractionGraph,
    target: &InteractionGraph,
    ks: &[usize],
    split: &str,
    seed: u64,
) -> Result<MetricReport> {
    if users.nrows() != train.n_users() || items.nrows() != train.n_items() {
        return Err(Error::Shape(format!(
            "embeddings are {}x{} users / {}x{} items for {} users and {} items",
            users.nrows(),
            users.ncols(),
            items.nrows(),
            items.ncols(),
            train.n_users(),
            train.n_items()
        )));
    }
    if users.ncols() != items.ncols() {
        return Err(Error::Shape("user and item embeddings differ in width".into()));
    }
    if users.iter().chain(items.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("embeddings contain non-finite values".into()));
    }
    evaluate_ranker(train, target, ks, split, seed, |u, exclude, k| {
        let scores = items.dot(&users.row(u)).to_vec();
        top_k_by_scores(&scores, exclude, k)
    })
}

/// Items by train interaction count descending, ties by id.
pub fn popularity_baseline(train: &InteractionGraph) -> Vec<usize> {
    let counts: Vec<f64> = train.item_counts().into_iter().map(|c| c as f64).collect();
    top_k_by_scores(&counts, &[], counts.len())
}

pub fn evaluate_popularity(
    train: &InteractionGraph,
    target: &InteractionGraph,
    ks: &[usize],
    split: &str,
) -> Result<MetricReport> {
    let order = popularity_baseline(train);
    evaluate_ranker(train, target, ks, split, 0, |_, exclude, k| {
        order
            .iter()
            .copied()
            .filter(|i| exclude.binary_search(i).is_err())
            .take(k)
            .collect()
    })
}
