//! Exact and clustered top-k retrieval over catalog embeddings.

mod ivf;
mod store;

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::catalog::{render, RenderingId, ToolRecord};
use crate::encoder::{EmbeddingVector, EncoderParams};
use crate::error::{Error, Result};

pub use ivf::{topk_approx, ApproxIndex, IvfConfig};

/// Unit vectors for every catalog tool, in catalog order.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    ids: Vec<String>,
    vectors: Vec<f64>,
    dim: usize,
    rendering: RenderingId,
    fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub hits: Vec<(String, f64)>,
}

impl RetrievalResult {
    pub fn ids(&self) -> Vec<String> {
        self.hits.iter().map(|(id, _)| id.clone()).collect()
    }
}

pub fn build_index(
    params: &EncoderParams,
    catalog: &[ToolRecord],
    rendering: RenderingId,
) -> Result<VectorIndex> {
    if catalog.is_empty() {
        return Err(Error::invalid("cannot index an empty catalog"));
    }
    let mut seen = HashSet::new();
    let mut ids = Vec::with_capacity(catalog.len());
    let mut vectors = Vec::with_capacity(catalog.len() * params.dim());
    for tool in catalog {
        if !seen.insert(tool.id.as_str()) {
            return Err(Error::DuplicateId {
                kind: "tool",
                id: tool.id.clone(),
            });
        }
        ids.push(tool.id.clone());
        vectors.extend_from_slice(params.embed(&render(tool, rendering)).as_slice());
    }
    Ok(VectorIndex {
        ids,
        vectors,
        dim: params.dim(),
        rendering,
        fingerprint: params.fingerprint(),
    })
}

impl VectorIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rendering(&self) -> RenderingId {
        self.rendering
    }

    /// Fingerprint of the encoder checkpoint the index was built with.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    fn check_query(&self, q: &EmbeddingVector, k: usize) -> Result<()> {
        if q.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: q.dim(),
            });
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        Ok(())
    }

    /// Ranks the given rows by inner product with `q`.
    fn rank_rows(&self, q: &[f64], rows: impl Iterator<Item = usize>, k: usize) -> RetrievalResult {
        let mut scored: Vec<(usize, f64)> = rows
            .map(|i| (i, crate::encoder::dot(q, self.vector(i))))
            .collect();
        let cmp = |a: &(usize, f64), b: &(usize, f64)| -> Ordering {
            b.1.total_cmp(&a.1).then_with(|| self.ids[a.0].cmp(&self.ids[b.0]))
        };
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        RetrievalResult {
            hits: scored
                .into_iter()
                .map(|(i, s)| (self.ids[i].clone(), s))
                .collect(),
        }
    }
}

/// Exact top-k by inner product. Ties go to the lexicographically smaller
/// tool id; `k > N` returns all `N` tools.
pub fn topk(index: &VectorIndex, query: &EmbeddingVector, k: usize) -> Result<RetrievalResult> {
    index.check_query(query, k)?;
    Ok(index.rank_rows(query.as_slice(), 0..index.len(), k))
}
