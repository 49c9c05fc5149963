//! Retrieval metrics, per-split/per-tier aggregation and paired bootstrap.

mod bootstrap;
mod metrics;
mod report;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::{QueryExample, RenderingId, Split, Tier};
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::index::{topk, VectorIndex};
use crate::rewriter::{clean, DecodeConfig, Rewriter};
use crate::rng::Rng;

pub use bootstrap::{paired_bootstrap, BootstrapResult, DEFAULT_RESAMPLES};
pub use metrics::{hit_at_k, ndcg_at_k, recall_at_k};
pub use report::{
    emit_ksweep, emit_report, emit_trajectory, read_report_csv, read_scores, write_scores, ReportFormat,
    TrajectoryPoint,
};

pub const DEFAULT_KS: [usize; 4] = [1, 5, 10, 20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Hit,
    Recall,
    Ndcg,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Hit, Metric::Recall, Metric::Ndcg];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Hit => "hit",
            Metric::Recall => "recall",
            Metric::Ndcg => "ndcg",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hit" => Ok(Metric::Hit),
            "recall" => Ok(Metric::Recall),
            "ndcg" => Ok(Metric::Ndcg),
            other => Err(Error::invalid(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtK {
    pub k: usize,
    pub hit: f64,
    pub recall: f64,
    pub ndcg: f64,
}

impl AtK {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Hit => self.hit,
            Metric::Recall => self.recall,
            Metric::Ndcg => self.ndcg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerQueryScore {
    pub query_id: String,
    pub tier: Tier,
    pub split: Split,
    pub at_k: Vec<AtK>,
    /// Top `max(K)` retrieved ids.
    pub ranked: Vec<String>,
}

impl PerQueryScore {
    pub fn value(&self, m: Metric, k: usize) -> Option<f64> {
        self.at_k.iter().find(|a| a.k == k).map(|a| a.get(m))
    }
}

/// Scores one ranking at every cutoff in `ks`.
pub fn score_query(q: &QueryExample, ranked: Vec<String>, ks: &[usize]) -> Result<PerQueryScore> {
    let at_k = ks
        .iter()
        .map(|&k| {
            Ok(AtK {
                k,
                hit: hit_at_k(&ranked, &q.gold_tool_ids, k)?,
                recall: recall_at_k(&ranked, &q.gold_tool_ids, k)?,
                ndcg: ndcg_at_k(&ranked, &q.gold_tool_ids, k)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PerQueryScore {
        query_id: q.query_id.clone(),
        tier: q.tier,
        split: q.split,
        at_k,
        ranked,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub metric: Metric,
    pub split: Split,
    pub tier: Tier,
    pub k: usize,
    /// `None` when the cell has no queries.
    pub mean: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cells: Vec<Cell>,
    pub encoder_fingerprint: String,
    pub rewriter_fingerprint: Option<String>,
}

impl MetricReport {
    /// Means per (metric, split, tier, k) over the given splits, in that
    /// nesting order. Every tier gets a cell, empty or not.
    pub fn from_scores(scores: &[PerQueryScore], splits: &[Split], ks: &[usize]) -> Self {
        let mut cells = Vec::new();
        for m in Metric::ALL {
            for &split in splits {
                for tier in Tier::ALL {
                    for &k in ks {
                        let vals: Vec<f64> = scores
                            .iter()
                            .filter(|s| s.split == split && s.tier == tier)
                            .filter_map(|s| s.value(m, k))
                            .collect();
                        let n = vals.len();
                        let mean = (n > 0).then(|| vals.iter().sum::<f64>() / n as f64);
                        cells.push(Cell {
                            metric: m,
                            split,
                            tier,
                            k,
                            mean,
                            n,
                        });
                    }
                }
            }
        }
        Self {
            cells,
            encoder_fingerprint: String::new(),
            rewriter_fingerprint: None,
        }
    }

    pub fn get(&self, m: Metric, split: Split, tier: Tier, k: usize) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.metric == m && c.split == split && c.tier == tier && c.k == k)
    }

    /// Unweighted mean over the non-empty tiers.
    pub fn tier_average(&self, m: Metric, split: Split, k: usize) -> Option<f64> {
        let means: Vec<f64> = Tier::ALL
            .iter()
            .filter_map(|&t| self.get(m, split, t, k).and_then(|c| c.mean))
            .collect();
        (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64)
    }
}

/// Retrieves for every query, either from the raw query or from the cleaned
/// greedy description of `rewriter`, and scores the top `max(K)`.
pub fn evaluate(
    params: &EncoderParams,
    rewriter: Option<&dyn Rewriter>,
    index: &VectorIndex,
    queries: &[QueryExample],
    ks: &[usize],
    rng: &mut Rng,
) -> Result<(MetricReport, Vec<PerQueryScore>)> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::invalid("cutoffs must be non-empty and positive"));
    }
    if index.rendering() != RenderingId::INDEX {
        return Err(Error::invalid("evaluation index must use the full-record rendering"));
    }
    if index.fingerprint() != params.fingerprint() {
        return Err(Error::invalid("index was built with a different encoder"));
    }
    let max_k = *ks.iter().max().unwrap();
    let decode = DecodeConfig::inference();
    let mut scores = Vec::with_capacity(queries.len());
    for q in queries {
        let text = match rewriter {
            None => q.text.clone(),
            Some(r) => {
                let d = r.generate(&q.text, &decode, 1, rng)?;
                clean(&d[0].text, &q.text)
            }
        };
        let ranked = topk(index, &params.embed(&text), max_k)?.ids();
        scores.push(score_query(q, ranked, ks)?);
    }
    let splits: BTreeSet<Split> = queries.iter().map(|q| q.split).collect();
    let mut report = MetricReport::from_scores(&scores, &splits.into_iter().collect::<Vec<_>>(), ks);
    report.encoder_fingerprint = params.fingerprint();
    Ok((report, scores))
}
