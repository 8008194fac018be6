//! Success@k and MRR@k for a single ranking.

use std::collections::BTreeSet;

use crate::pipeline::RankedList;

/// 1-based rank of the first needle, if any.
pub fn first_hit(ranking: &RankedList, needles: &BTreeSet<String>) -> Option<usize> {
    ranking.ids().position(|id| needles.contains(id)).map(|p| p + 1)
}

/// 1 if a needle sits at rank `≤ k`, else 0. `k` must be at least 1.
pub fn success_at_k(ranking: &RankedList, needles: &BTreeSet<String>, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    match first_hit(ranking, needles) {
        Some(r) if r <= k => 1.0,
        _ => 0.0,
    }
}

/// Reciprocal rank of the first needle within the top `k`, else 0.
pub fn mrr_at_k(ranking: &RankedList, needles: &BTreeSet<String>, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    match first_hit(ranking, needles) {
        Some(r) if r <= k => 1.0 / r as f64,
        _ => 0.0,
    }
}
