use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

pub const DEFAULT_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Mean of `x - y` over the original queries.
    pub delta: f64,
    pub lo: f64,
    pub hi: f64,
    pub resamples: usize,
    pub seed: u64,
    pub n: usize,
}

/// Paired percentile bootstrap on per-query scores keyed by query id.
///
/// Queries are put in id order, resampled with replacement `resamples`
/// times, and the 2.5% / 97.5% nearest-rank percentiles of the resampled
/// mean differences form the interval. Pass `y` as zeros for a
/// single-system interval.
pub fn paired_bootstrap(
    x: &[(String, f64)],
    y: &[(String, f64)],
    resamples: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if resamples == 0 {
        return Err(Error::invalid("resample count must be at least 1"));
    }
    let ys: HashMap<&str, f64> = y.iter().map(|(id, v)| (id.as_str(), *v)).collect();
    if ys.len() != y.len() {
        return Err(Error::invalid("duplicate query id in second score set"));
    }
    let mut pairs: Vec<(&str, f64)> = Vec::with_capacity(x.len());
    for (id, xv) in x {
        let yv = ys
            .get(id.as_str())
            .ok_or_else(|| Error::invalid(format!("query `{id}` missing from second score set")))?;
        pairs.push((id.as_str(), xv - yv));
    }
    if pairs.len() != ys.len() {
        return Err(Error::invalid("score sets cover different queries"));
    }
    if pairs.is_empty() {
        return Err(Error::invalid("no scores to resample"));
    }
    pairs.sort_by(|a, b| a.0.cmp(b.0));
    if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid("duplicate query id in first score set"));
    }
    let d: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let n = d.len();
    let delta = d.iter().sum::<f64>() / n as f64;

    let mut rng = rng_from(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| d[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Ok(BootstrapResult {
        delta,
        lo: means[nearest_rank(0.025, resamples)],
        hi: means[nearest_rank(0.975, resamples)],
        resamples,
        seed,
        n,
    })
}

/// Zero-based index of the nearest-rank percentile `q` among `b` sorted values.
fn nearest_rank(q: f64, b: usize) -> usize {
    ((q * b as f64).ceil() as usize).clamp(1, b) - 1
}
