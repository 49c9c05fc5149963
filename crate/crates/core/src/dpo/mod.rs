//! Preference pairs scored by retrieval quality, and sigmoid DPO training
//! of the built-in policy.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::catalog::QueryExample;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::eval::ndcg_at_k;
use crate::index::{topk, VectorIndex};
use crate::optim::AdamConfig;
use crate::rewriter::{clean, generate, DecodeConfig, GeneratedDescription, GeneratorPolicy, PolicyGrad, PolicyOptimizer};
use crate::rng::{derive_label, rng_from, Rng};

/// Cutoff used to score candidates.
pub const SCORE_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub query_id: String,
    pub query: String,
    pub chosen: GeneratedDescription,
    pub rejected: GeneratedDescription,
    /// Cleaned candidate texts, as embedded for scoring.
    pub chosen_text: String,
    pub rejected_text: String,
    pub chosen_score: f64,
    pub rejected_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpoConfig {
    pub beta: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DpoConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            lr: 0.002,
            epochs: 1,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl DpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta {} must be positive", self.beta)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} is invalid", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// (best, worst) candidate indices, lowest index on ties; `None` when all
/// scores are equal.
pub fn select_pair(scores: &[f64]) -> Option<(usize, usize)> {
    let first = *scores.first()?;
    let (mut best, mut worst) = (0, 0);
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
        if s < scores[worst] {
            worst = i;
        }
    }
    (scores.iter().any(|&s| s != first)).then_some((best, worst))
}

/// Samples `n_candidates` descriptions per query, scores each cleaned
/// description by NDCG@5 against the query's gold set, and keeps the
/// (best, worst) pair. Queries whose candidates all score the same are
/// dropped.
pub fn build_pairs(
    policy: &GeneratorPolicy,
    params: &EncoderParams,
    index: &VectorIndex,
    queries: &[QueryExample],
    n_candidates: usize,
    decode: &DecodeConfig,
    rng: &mut Rng,
) -> Result<Vec<PreferencePair>> {
    if n_candidates < 2 {
        return Err(Error::invalid("at least two candidates are needed to form a pair"));
    }
    if index.fingerprint() != params.fingerprint() {
        return Err(Error::invalid("index was built with a different encoder"));
    }
    let base: u64 = rng.random();
    let mut pairs = Vec::new();
    for q in queries {
        let mut qrng = rng_from(derive_label(base, &q.query_id));
        let cands = generate(policy, &q.text, decode, n_candidates, &mut qrng)?;
        let mut texts = Vec::with_capacity(cands.len());
        let mut scores = Vec::with_capacity(cands.len());
        for c in &cands {
            let text = clean(&c.text, &q.text);
            let ranked = topk(index, &params.embed(&text), SCORE_K)?.ids();
            scores.push(ndcg_at_k(&ranked, &q.gold_tool_ids, SCORE_K)?);
            texts.push(text);
        }
        if let Some((b, w)) = select_pair(&scores) {
            pairs.push(PreferencePair {
                query_id: q.query_id.clone(),
                query: q.text.clone(),
                chosen: cands[b].clone(),
                rejected: cands[w].clone(),
                chosen_text: texts[b].clone(),
                rejected_text: texts[w].clone(),
                chosen_score: scores[b],
                rejected_score: scores[w],
            });
        }
    }
    if pairs.is_empty() && !queries.is_empty() {
        log::warn!("every query had tied candidate scores; no preference pairs formed");
    }
    Ok(pairs)
}

/// `-ln sigmoid(beta * margin)` with
/// `margin = (lp_c - ref_c) - (lp_r - ref_r)`, evaluated stably.
pub fn sigmoid_dpo_loss(lp_c: f64, lp_r: f64, ref_c: f64, ref_r: f64, beta: f64) -> f64 {
    softplus(-beta * ((lp_c - ref_c) - (lp_r - ref_r)))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_compatible(policy: &GeneratorPolicy, reference: &GeneratorPolicy) -> Result<()> {
    if policy.vocab().tokens() != reference.vocab().tokens() || policy.rules() != reference.rules() {
        return Err(Error::invalid("policy and reference have different vocabularies"));
    }
    Ok(())
}

fn seq_lp(p: &GeneratorPolicy, q: &str, d: &GeneratedDescription) -> f64 {
    p.sequence_log_prob(q, &d.tokens, d.terminated)
}

fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub fn dpo_loss(
    policy: &GeneratorPolicy,
    reference: &GeneratorPolicy,
    pair: &PreferencePair,
    beta: f64,
) -> Result<f64> {
    check_compatible(policy, reference)?;
    let lp_c = finite(seq_lp(policy, &pair.query, &pair.chosen), "chosen log-prob")?;
    let lp_r = finite(seq_lp(policy, &pair.query, &pair.rejected), "rejected log-prob")?;
    let ref_c = finite(seq_lp(reference, &pair.query, &pair.chosen), "reference chosen log-prob")?;
    let ref_r = finite(seq_lp(reference, &pair.query, &pair.rejected), "reference rejected log-prob")?;
    Ok(sigmoid_dpo_loss(lp_c, lp_r, ref_c, ref_r, beta))
}

/// Gradient of [`dpo_loss`] over the policy's parameters; the reference
/// contributes constants only.
pub fn dpo_grad(
    policy: &GeneratorPolicy,
    reference: &GeneratorPolicy,
    pair: &PreferencePair,
    beta: f64,
) -> Result<PolicyGrad> {
    check_compatible(policy, reference)?;
    let ref_c = seq_lp(reference, &pair.query, &pair.chosen);
    let ref_r = seq_lp(reference, &pair.query, &pair.rejected);
    grad_with_reference(policy, pair, ref_c, ref_r, beta).map(|(_, g)| g)
}

/// Loss and gradient given precomputed reference log-probs.
fn grad_with_reference(
    policy: &GeneratorPolicy,
    pair: &PreferencePair,
    ref_c: f64,
    ref_r: f64,
    beta: f64,
) -> Result<(f64, PolicyGrad)> {
    let (lp_c, g_c) = policy.log_prob_grad(&pair.query, &pair.chosen.tokens, pair.chosen.terminated);
    let (lp_r, g_r) = policy.log_prob_grad(&pair.query, &pair.rejected.tokens, pair.rejected.terminated);
    for x in [lp_c, lp_r, ref_c, ref_r] {
        finite(x, "sequence log-prob")?;
    }
    let margin = (lp_c - ref_c) - (lp_r - ref_r);
    let loss = softplus(-beta * margin);
    // dL/dmargin = -beta * sigmoid(-beta * margin)
    let coef = -beta * sigmoid(-beta * margin);
    let mut g = g_c;
    g.add_scaled(&g_r, -1.0);
    g.scale(coef);
    Ok((loss, g))
}

#[derive(Debug, Clone)]
pub struct DpoOutcome {
    pub policy: GeneratorPolicy,
    /// Mean pair loss per epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
    /// Mean `log p(chosen) - log p(rejected)` before and after training.
    pub initial_margin: f64,
    pub final_margin: f64,
}

fn mean_margin(p: &GeneratorPolicy, pairs: &[PreferencePair]) -> f64 {
    pairs
        .iter()
        .map(|x| seq_lp(p, &x.query, &x.chosen) - seq_lp(p, &x.query, &x.rejected))
        .sum::<f64>()
        / pairs.len() as f64
}

/// Mini-batch Adam on the DPO loss. The reference is a frozen copy of the
/// input policy.
pub fn dpo_train(policy: &GeneratorPolicy, pairs: &[PreferencePair], cfg: &DpoConfig) -> Result<DpoOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::invalid("no preference pairs to train on"));
    }
    let reference = policy.clone();
    let refs: Vec<(f64, f64)> = pairs
        .iter()
        .map(|p| (seq_lp(&reference, &p.query, &p.chosen), seq_lp(&reference, &p.query, &p.rejected)))
        .collect();
    let mut current = policy.clone();
    let mut opt = PolicyOptimizer::new(AdamConfig::default());
    let mut rng = rng_from(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let initial_margin = mean_margin(&current, pairs);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut acc: Option<PolicyGrad> = None;
            for &i in chunk {
                let (loss, g) = grad_with_reference(&current, &pairs[i], refs[i].0, refs[i].1, cfg.beta)?;
                total += loss;
                match acc.as_mut() {
                    Some(a) => a.add_scaled(&g, 1.0),
                    None => acc = Some(g),
                }
            }
            let mut g = acc.expect("chunks are non-empty");
            g.scale(1.0 / chunk.len() as f64);
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("DPO gradient in epoch {epoch}")));
            }
            current.apply_update(&g, &mut opt, cfg.lr);
        }
        let mean = total / pairs.len() as f64;
        log::debug!("dpo epoch {epoch}: mean loss {mean:.5}");
        epoch_losses.push(mean);
    }
    if !current.is_finite() {
        return Err(Error::NonFinite("policy parameters after DPO".into()));
    }
    let final_margin = mean_margin(&current, pairs);
    Ok(DpoOutcome {
        policy: current,
        epoch_losses,
        initial_margin,
        final_margin,
    })
}

pub fn write_pairs(pairs: &[PreferencePair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for p in pairs {
        serde_json::to_writer(&mut w, p).map_err(|e| Error::invalid(e.to_string()))?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<PreferencePair>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
    }
    Ok(out)
}
