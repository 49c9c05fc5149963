use std::collections::HashSet;

use crate::error::{Error, Result};

fn check(gold: &[String], k: usize) -> Result<HashSet<&str>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let set: HashSet<&str> = gold.iter().map(String::as_str).collect();
    if set.is_empty() {
        return Err(Error::invalid("gold set is empty"));
    }
    Ok(set)
}

/// Relevance of each of the first `k` positions; a repeated id counts once.
fn relevance(ranked: &[String], gold: &HashSet<&str>, k: usize) -> Vec<bool> {
    let mut seen = HashSet::new();
    ranked
        .iter()
        .take(k)
        .map(|id| gold.contains(id.as_str()) && seen.insert(id.as_str()))
        .collect()
}

/// 1 if any gold tool appears in the first `k` positions.
pub fn hit_at_k(ranked: &[String], gold: &[String], k: usize) -> Result<f64> {
    let set = check(gold, k)?;
    Ok(if relevance(ranked, &set, k).contains(&true) { 1.0 } else { 0.0 })
}

/// Fraction of the gold set found in the first `k` positions.
pub fn recall_at_k(ranked: &[String], gold: &[String], k: usize) -> Result<f64> {
    let set = check(gold, k)?;
    let found = relevance(ranked, &set, k).iter().filter(|&&h| h).count();
    Ok(found as f64 / set.len() as f64)
}

/// Binary-relevance NDCG with `1 / log2(j + 1)` discounts; the ideal DCG
/// has `min(k, |gold|)` terms. Positions beyond the ranking contribute 0.
pub fn ndcg_at_k(ranked: &[String], gold: &[String], k: usize) -> Result<f64> {
    let set = check(gold, k)?;
    let dcg: f64 = relevance(ranked, &set, k)
        .iter()
        .enumerate()
        .filter(|(_, &h)| h)
        .map(|(j, _)| 1.0 / ((j + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..k.min(set.len())).map(|j| 1.0 / ((j + 2) as f64).log2()).sum();
    Ok(dcg / idcg)
}
