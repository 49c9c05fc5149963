use rand::seq::index::sample;

use super::{RetrievalResult, VectorIndex};
use crate::encoder::{dot, EmbeddingVector};
use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Inverted-file parameters: `n_lists` k-means cells, of which the
/// `n_probe` closest to the query are scanned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvfConfig {
    pub n_lists: usize,
    pub n_probe: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for IvfConfig {
    fn default() -> Self {
        Self {
            n_lists: 64,
            n_probe: 24,
            iterations: 10,
            seed: 0,
        }
    }
}

/// Exact index plus a spherical k-means partition of its rows.
#[derive(Debug, Clone)]
pub struct ApproxIndex {
    base: VectorIndex,
    centroids: Vec<Vec<f64>>,
    lists: Vec<Vec<usize>>,
}

impl ApproxIndex {
    pub fn build(base: VectorIndex, cfg: &IvfConfig) -> Result<Self> {
        if cfg.n_lists == 0 {
            return Err(Error::invalid("n_lists must be at least 1"));
        }
        let n = base.len();
        let n_lists = cfg.n_lists.min(n);
        let mut rng = rng_from(cfg.seed);
        let mut centroids: Vec<Vec<f64>> = sample(&mut rng, n, n_lists)
            .into_iter()
            .map(|i| base.vector(i).to_vec())
            .collect();
        let mut assign = vec![0usize; n];
        for _ in 0..cfg.iterations.max(1) {
            for (i, a) in assign.iter_mut().enumerate() {
                *a = nearest(&centroids, base.vector(i));
            }
            let mut sums = vec![vec![0.0; base.dim()]; n_lists];
            for (i, &a) in assign.iter().enumerate() {
                for (s, x) in sums[a].iter_mut().zip(base.vector(i)) {
                    *s += x;
                }
            }
            for (c, s) in centroids.iter_mut().zip(sums) {
                let norm = dot(&s, &s).sqrt();
                // an emptied cell keeps its previous centroid
                if norm > 0.0 {
                    *c = s.into_iter().map(|x| x / norm).collect();
                }
            }
        }
        let mut lists = vec![Vec::new(); n_lists];
        for i in 0..n {
            lists[nearest(&centroids, base.vector(i))].push(i);
        }
        Ok(Self {
            base,
            centroids,
            lists,
        })
    }

    pub fn exact(&self) -> &VectorIndex {
        &self.base
    }

    pub fn n_lists(&self) -> usize {
        self.lists.len()
    }
}

fn nearest(centroids: &[Vec<f64>], v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_s = f64::NEG_INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let s = dot(centroid, v);
        if s > best_s {
            best = c;
            best_s = s;
        }
    }
    best
}

/// Scans the `cfg.n_probe` cells nearest to the query. With
/// `n_probe >= n_lists` the result equals [`super::topk`].
pub fn topk_approx(
    index: &ApproxIndex,
    query: &EmbeddingVector,
    k: usize,
    cfg: &IvfConfig,
) -> Result<RetrievalResult> {
    index.base.check_query(query, k)?;
    let q = query.as_slice();
    let mut cells: Vec<(usize, f64)> = index
        .centroids
        .iter()
        .enumerate()
        .map(|(c, centroid)| (c, dot(centroid, q)))
        .collect();
    cells.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let probe = cfg.n_probe.clamp(1, cells.len());
    let mut rows: Vec<usize> = cells[..probe]
        .iter()
        .flat_map(|&(c, _)| index.lists[c].iter().copied())
        .collect();
    rows.sort_unstable();
    Ok(index.base.rank_rows(q, rows.into_iter(), k))
}

#[cfg(test)]
mod tests {
    use super::super::tests::{random_unit, raw_index};
    use super::super::topk;
    use super::*;
    use crate::rng::rng_from;

    fn clustered(n: usize, d: usize, seed: u64) -> VectorIndex {
        let mut rng = rng_from(seed);
        let centers: Vec<Vec<f64>> = (0..20).map(|_| random_unit(&mut rng, d)).collect();
        let vecs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let noise = random_unit(&mut rng, d);
                centers[i % 20].iter().zip(&noise).map(|(c, e)| c + 0.3 * e).collect()
            })
            .collect();
        raw_index(&vecs)
    }

    #[test]
    fn exhaustive_probe_equals_exact() {
        let idx = clustered(300, 8, 1);
        let cfg = IvfConfig {
            n_lists: 16,
            n_probe: 16,
            ..IvfConfig::default()
        };
        let approx = ApproxIndex::build(idx.clone(), &cfg).unwrap();
        let mut rng = rng_from(2);
        for _ in 0..20 {
            let q = EmbeddingVector(random_unit(&mut rng, 8));
            assert_eq!(topk_approx(&approx, &q, 10, &cfg).unwrap(), topk(&idx, &q, 10).unwrap());
        }
    }

    #[test]
    fn k_equal_n_returns_everything() {
        let idx = clustered(100, 4, 3);
        let cfg = IvfConfig {
            n_lists: 8,
            n_probe: 8,
            ..IvfConfig::default()
        };
        let approx = ApproxIndex::build(idx.clone(), &cfg).unwrap();
        let q = EmbeddingVector(random_unit(&mut rng_from(4), 4));
        let mut a = topk_approx(&approx, &q, 100, &cfg).unwrap().ids();
        let mut e = topk(&idx, &q, 100).unwrap().ids();
        a.sort();
        e.sort();
        assert_eq!(a, e);
    }

    #[test]
    fn partial_probe_has_high_overlap_on_clustered_data() {
        let idx = clustered(2000, 16, 5);
        let cfg = IvfConfig {
            n_lists: 32,
            n_probe: 8,
            ..IvfConfig::default()
        };
        let approx = ApproxIndex::build(idx.clone(), &cfg).unwrap();
        let mut rng = rng_from(6);
        let mut overlap = 0.0;
        for _ in 0..100 {
            let q = EmbeddingVector(random_unit(&mut rng, 16));
            let e = topk(&idx, &q, 10).unwrap().ids();
            let a = topk_approx(&approx, &q, 10, &cfg).unwrap().ids();
            overlap += a.iter().filter(|id| e.contains(id)).count() as f64 / 10.0;
        }
        assert!(overlap / 100.0 > 0.8);
    }
}
