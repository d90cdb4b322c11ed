//! Full-ranking top-k metrics with binary relevance.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1};

/// Score descending, then id ascending.
fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `k` best candidates by `scores`, skipping ids in the sorted slice
/// `exclude`.
pub fn top_k_by_scores(scores: &[f64], exclude: &[usize], k: usize) -> Vec<usize> {
    let mut candidates: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| exclude.binary_search(i).is_err())
        .map(|(i, s)| (i, *s))
        .collect();
    if k == 0 {
        return Vec::new();
    }
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, rank_order);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(rank_order);
    candidates.into_iter().map(|(i, _)| i).collect()
}

/// Every non-excluded item ordered by `<user, item>`; `exclude` must be
/// sorted.
pub fn rank_items(user: ArrayView1<'_, f64>, items: &Array2<f64>, exclude: &[usize]) -> Vec<usize> {
    let scores = items.dot(&user).to_vec();
    top_k_by_scores(&scores, exclude, items.nrows())
}

/// `|top-k ∩ relevant| / |relevant|`; `relevant` must be sorted.
pub fn recall_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let hits = ranked.iter().take(k).filter(|i| relevant.binary_search(i).is_ok()).count();
    hits as f64 / relevant.len() as f64
}

/// DCG over the top `k` divided by the ideal DCG of `min(k, |relevant|)`
/// leading hits; `relevant` must be sorted.
pub fn ndcg_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let discount = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.binary_search(i).is_ok())
        .map(|(p, _)| discount(p))
        .sum();
    let idcg: f64 = (0..k.min(relevant.len())).map(discount).sum();
    dcg / idcg
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ranking_by_score_then_id() {
        let items = array![[0.9], [0.1]];
        assert_eq!(rank_items(array![1.0].view(), &items, &[]), vec![0, 1]);
        let tied = array![[0.5], [0.5], [0.7]];
        assert_eq!(rank_items(array![1.0].view(), &tied, &[]), vec![2, 0, 1]);
        assert_eq!(rank_items(array![1.0].view(), &tied, &[0, 1, 2]), Vec::<usize>::new());
        assert_eq!(rank_items(array![1.0].view(), &tied, &[2]), vec![0, 1]);
    }

    #[test]
    fn top_k_agrees_with_full_sort_prefix() {
        let scores = [0.3, 0.9, 0.3, -1.0, 0.9, 0.0];
        let full = top_k_by_scores(&scores, &[5], 6);
        assert_eq!(full, vec![1, 4, 0, 2, 3]);
        for k in 0..7 {
            assert_eq!(top_k_by_scores(&scores, &[5], k), full[..k.min(5)].to_vec());
        }
    }

    #[test]
    fn recall_cases() {
        assert_eq!(recall_at_k(&[0, 1, 2], &[0, 2], 3), 1.0);
        assert!((recall_at_k(&[0, 5], &[0, 1, 2], 2) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(recall_at_k(&[4, 5], &[0, 1], 2), 0.0);
    }

    #[test]
    fn ndcg_cases() {
        assert_eq!(ndcg_at_k(&[0, 1, 2], &[0], 1), 1.0);
        let v = ndcg_at_k(&[1, 0], &[0], 2);
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!((v - 0.630930).abs() < 1e-6);
        assert_eq!(ndcg_at_k(&[3, 4], &[0, 1], 2), 0.0);
    }
}
