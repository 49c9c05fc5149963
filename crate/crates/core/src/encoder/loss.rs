use super::features::FeatureVector;
use super::params::{dot, EncoderParams};
use crate::error::{Error, Result};
use crate::optim::SparseRows;

/// In-batch contrastive batch of (anchor, positive) texts.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub pairs: Vec<(String, String)>,
}

impl ContrastiveBatch {
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("contrastive batch must contain at least one pair"));
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn features(&self, params: &EncoderParams) -> (Vec<FeatureVector>, Vec<FeatureVector>) {
        self.pairs
            .iter()
            .map(|(a, p)| (params.featurize(a), params.featurize(p)))
            .unzip()
    }
}

pub fn infonce_loss(params: &EncoderParams, batch: &ContrastiveBatch) -> Result<f64> {
    let (a, p) = batch.features(params);
    Ok(loss_and_grad(params, &a, &p, false)?.0)
}

/// Exact gradient of [`infonce_loss`] with respect to `W`, restricted to
/// the feature rows that occur in the batch.
pub fn infonce_grad(params: &EncoderParams, batch: &ContrastiveBatch) -> Result<SparseRows> {
    let (a, p) = batch.features(params);
    Ok(loss_and_grad(params, &a, &p, true)?.1.expect("gradient requested"))
}

struct Side {
    unit: Vec<Vec<f64>>,
    /// Pre-normalization norm, or `None` for the fallback vector.
    norm: Vec<Option<f64>>,
}

fn encode_side(params: &EncoderParams, feats: &[FeatureVector]) -> Side {
    let mut unit = Vec::with_capacity(feats.len());
    let mut norm = Vec::with_capacity(feats.len());
    for f in feats {
        let mut u = params.project(f);
        let n = dot(&u, &u).sqrt();
        if n > 0.0 && n.is_finite() {
            u.iter_mut().for_each(|x| *x /= n);
            norm.push(Some(n));
        } else {
            u.iter_mut().for_each(|x| *x = 0.0);
            u[0] = 1.0;
            norm.push(None);
        }
        unit.push(u);
    }
    Side { unit, norm }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Symmetric InfoNCE over pre-featurized anchors and positives.
///
/// `S_ij = <a_i, p_j> / tau`,
/// `L = 1/(2B) * sum_i [(lse_j S_ij - S_ii) + (lse_j S_ji - S_ii)]`.
pub(crate) fn loss_and_grad(
    params: &EncoderParams,
    anchors: &[FeatureVector],
    positives: &[FeatureVector],
    want_grad: bool,
) -> Result<(f64, Option<SparseRows>)> {
    let b = anchors.len();
    if b == 0 || positives.len() != b {
        return Err(Error::invalid("batch must be non-empty with one positive per anchor"));
    }
    let tau = params.temperature();
    let a = encode_side(params, anchors);
    let p = encode_side(params, positives);

    let mut s = vec![0.0; b * b];
    for i in 0..b {
        for j in 0..b {
            s[i * b + j] = dot(&a.unit[i], &p.unit[j]) / tau;
        }
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("similarity matrix".into()));
    }
    let lse_row: Vec<f64> = (0..b).map(|i| log_sum_exp((0..b).map(|j| s[i * b + j]))).collect();
    let lse_col: Vec<f64> = (0..b).map(|j| log_sum_exp((0..b).map(|i| s[i * b + j]))).collect();
    let scale = 1.0 / (2.0 * b as f64);
    let loss = scale
        * (0..b)
            .map(|i| (lse_row[i] - s[i * b + i]) + (lse_col[i] - s[i * b + i]))
            .sum::<f64>();
    if !loss.is_finite() {
        return Err(Error::NonFinite("InfoNCE loss".into()));
    }
    if !want_grad {
        return Ok((loss, None));
    }

    // dL/dS_ij = scale * (rowsoftmax_ij + colsoftmax_ij - 2 delta_ij)
    let d = params.dim();
    let mut g_a = vec![vec![0.0; d]; b];
    let mut g_p = vec![vec![0.0; d]; b];
    for i in 0..b {
        for j in 0..b {
            let sij = s[i * b + j];
            let mut g = (sij - lse_row[i]).exp() + (sij - lse_col[j]).exp();
            if i == j {
                g -= 2.0;
            }
            let g = scale * g / tau;
            for k in 0..d {
                g_a[i][k] += g * p.unit[j][k];
                g_p[j][k] += g * a.unit[i][k];
            }
        }
    }

    let mut grad = SparseRows::new(d);
    for (side, feats, gs) in [(&a, anchors, &g_a), (&p, positives, &g_p)] {
        for i in 0..b {
            let Some(n) = side.norm[i] else { continue };
            let v = &side.unit[i];
            let proj = dot(v, &gs[i]);
            let du: Vec<f64> = (0..d).map(|k| (gs[i][k] - v[k] * proj) / n).collect();
            for &(f, c) in feats[i].entries() {
                for (acc, x) in grad.row_mut(f).iter_mut().zip(&du) {
                    *acc += c * x;
                }
            }
        }
    }
    Ok((loss, Some(grad)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn batch(pairs: &[(&str, &str)]) -> ContrastiveBatch {
        ContrastiveBatch::new(pairs.iter().map(|(a, p)| (a.to_string(), p.to_string())).collect())
            .unwrap()
    }

    /// Dense reference: explicit W^T x, explicit normalization, explicit
    /// softmax matrices, no shared helpers with the implementation.
    fn dense_oracle(params: &EncoderParams, batch: &ContrastiveBatch) -> f64 {
        let d = params.dim();
        let embed = |text: &str| -> Vec<f64> {
            let mut x = vec![0.0; params.feature_dim()];
            for (i, c) in params.featurize(text).entries() {
                x[*i] = *c;
            }
            let mut u = vec![0.0; d];
            for f in 0..params.feature_dim() {
                if x[f] != 0.0 {
                    for k in 0..d {
                        u[k] += x[f] * params.weights()[f * d + k];
                    }
                }
            }
            let n: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter().map(|v| v / n).collect()
        };
        let a: Vec<Vec<f64>> = batch.pairs.iter().map(|(x, _)| embed(x)).collect();
        let p: Vec<Vec<f64>> = batch.pairs.iter().map(|(_, y)| embed(y)).collect();
        let b = a.len();
        let s = |i: usize, j: usize| -> f64 {
            a[i].iter().zip(&p[j]).map(|(x, y)| x * y).sum::<f64>() / params.temperature()
        };
        let mut total = 0.0;
        for i in 0..b {
            let row: f64 = (0..b).map(|j| s(i, j).exp()).sum();
            let col: f64 = (0..b).map(|j| s(j, i).exp()).sum();
            total += -(s(i, i).exp() / row).ln() - (s(i, i).exp() / col).ln();
        }
        total / (2.0 * b as f64)
    }

    fn random_batch(seed: u64, b: usize) -> ContrastiveBatch {
        let words = ["weather", "stock", "flight", "song", "recipe", "map", "news", "email", "video"];
        let mut rng = rng_from(seed);
        let mut pick = |n: usize| -> String {
            (0..n)
                .map(|_| words[rng.random_range(0..words.len())])
                .collect::<Vec<_>>()
                .join(" ")
        };
        let pairs = (0..b).map(|_| (pick(3), pick(4))).collect();
        ContrastiveBatch::new(pairs).unwrap()
    }

    #[test]
    fn single_pair_loss_and_grad_are_zero() {
        let params = EncoderParams::random(1 << 8, 4, 0.05, 1).unwrap();
        let b = batch(&[("weather today", "forecast api")]);
        assert_eq!(infonce_loss(&params, &b).unwrap(), 0.0);
        let g = infonce_grad(&params, &b).unwrap();
        assert!(g.rows.values().flatten().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn orthogonal_pairs_give_closed_form() {
        // Two texts whose single trigram hits distinct rows of W, chosen so
        // that the anchor and positive of pair i both map to basis e_i.
        let fdim = 1 << 12;
        let tau = 0.05;
        let texts = ["abc", "xyz"];
        let rows: Vec<usize> = texts
            .iter()
            .map(|t| super::super::features::featurize(t, fdim).entries()[0].0)
            .collect();
        assert_ne!(rows[0], rows[1]);
        let mut w = vec![0.0; fdim * 2];
        w[rows[0] * 2] = 1.0;
        w[rows[1] * 2 + 1] = 1.0;
        let params = EncoderParams::from_weights(fdim, 2, tau, w).unwrap();
        let b = batch(&[("abc", "abc"), ("xyz", "xyz")]);
        let expected = (1.0 + (-1.0f64 / tau).exp()).ln();
        assert!((infonce_loss(&params, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_oracle() {
        for seed in 0..20 {
            let params = EncoderParams::random(1 << 9, 6, 0.05, seed).unwrap();
            let b = random_batch(seed + 100, 1 + (seed as usize % 6));
            let got = infonce_loss(&params, &b).unwrap();
            let want = dense_oracle(&params, &b);
            assert!((got - want).abs() < 1e-10, "seed {seed}: {got} vs {want}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for seed in 0..100u64 {
            let params = EncoderParams::random(1 << 8, 4, 0.5, seed).unwrap();
            let b = random_batch(seed + 7, 2 + (seed as usize % 4));
            let g = infonce_grad(&params, &b).unwrap();
            let mut rng = rng_from(seed + 1000);
            let rows: Vec<usize> = g.rows.keys().copied().collect();
            for _ in 0..3 {
                let f = rows[rng.random_range(0..rows.len())];
                let k = rng.random_range(0..params.dim());
                let idx = f * params.dim() + k;
                let shifted = |delta: f64| {
                    let mut w = params.weights().to_vec();
                    w[idx] += delta;
                    let p = EncoderParams::from_weights(params.feature_dim(), params.dim(), params.temperature(), w)
                        .unwrap();
                    infonce_loss(&p, &b).unwrap()
                };
                let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
                let analytic = g.get(f, k);
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn duplicate_pairs_give_symmetric_finite_gradient() {
        let params = EncoderParams::random(1 << 8, 4, 0.05, 9).unwrap();
        let b = batch(&[("find flights", "Flight Search API"), ("find flights", "Flight Search API")]);
        let loss = infonce_loss(&params, &b).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        let g = infonce_grad(&params, &b).unwrap();
        assert!(g.is_finite());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn loss_non_negative_and_permutation_invariant(seed in 0u64..10_000, b in 1usize..7, rot in 0usize..7) {
            let params = EncoderParams::random(1 << 8, 4, 0.05, seed).unwrap();
            let batch = random_batch(seed, b);
            let loss = infonce_loss(&params, &batch).unwrap();
            prop_assert!(loss >= 0.0);
            let mut pairs = batch.pairs.clone();
            pairs.rotate_left(rot % b);
            let permuted = infonce_loss(&params, &ContrastiveBatch::new(pairs).unwrap()).unwrap();
            prop_assert!((loss - permuted).abs() < 1e-10);
        }
    }
}
