use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tokenize::{detokenize, is_stopword, tokenize};
use super::{DecodeConfig, GeneratedDescription};
use crate::catalog::{render, Lexicon, RenderingId, ToolRecord};
use crate::encoder::write_atomic;
use crate::error::{Error, Result};
use crate::optim::SparseRows;
use crate::rng::{fnv1a64, rng_from};

/// End-of-sequence id. Row `EOS` of the transition table doubles as the
/// start-of-sequence context.
pub const EOS: usize = 0;
pub const EOS_TOKEN: &str = "</s>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Hash buckets for query-word features.
    pub query_buckets: usize,
    /// Probability floor mixed into every conditional.
    pub epsilon: f64,
    /// Additive smoothing for the transition counts in `warmup_fit`.
    pub smoothing: f64,
    /// Initial copy bonus.
    pub copy_prior: f64,
    /// Initial weight of each lexicon rule.
    pub lexicon_prior: f64,
    /// Initial bonus for re-emitting a content token (negative penalizes).
    pub repeat_prior: f64,
    /// Initial end-of-sequence bonus once every copy and rule target is out.
    pub coverage_prior: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            query_buckets: 1024,
            epsilon: 1e-8,
            smoothing: 0.01,
            copy_prior: 3.0,
            lexicon_prior: 3.0,
            repeat_prior: -3.0,
            coverage_prior: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Sorted unique tokens after the reserved end-of-sequence entry.
    pub fn new(tokens: impl IntoIterator<Item = String>) -> Self {
        let set: BTreeSet<String> = tokens.into_iter().filter(|t| t != EOS_TOKEN).collect();
        let tokens: Vec<String> = std::iter::once(EOS_TOKEN.to_string()).chain(set).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Colloquial phrase that, when present in a query, boosts a technical token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconRule {
    pub phrase: Vec<String>,
    pub target: String,
}

/// Query-derived inputs to every step of the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    features: Vec<(usize, f64)>,
    copy: Vec<usize>,
    rules: Vec<usize>,
}

/// Gradient over the trainable blocks, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrad {
    pub a: SparseRows,
    pub b: SparseRows,
    pub kappa: f64,
    pub rho: f64,
    pub eta: f64,
    pub lambda: Vec<f64>,
}

impl PolicyGrad {
    fn zeros(v: usize, rules: usize) -> Self {
        Self {
            a: SparseRows::new(v),
            b: SparseRows::new(v),
            kappa: 0.0,
            rho: 0.0,
            eta: 0.0,
            lambda: vec![0.0; rules],
        }
    }

    pub fn add_scaled(&mut self, other: &PolicyGrad, scale: f64) {
        self.a.add_scaled(&other.a, scale);
        self.b.add_scaled(&other.b, scale);
        self.kappa += scale * other.kappa;
        self.rho += scale * other.rho;
        self.eta += scale * other.eta;
        for (x, y) in self.lambda.iter_mut().zip(&other.lambda) {
            *x += scale * y;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for x in self.a.rows.values_mut().chain(self.b.rows.values_mut()).flatten() {
            *x *= s;
        }
        self.kappa *= s;
        self.rho *= s;
        self.eta *= s;
        self.lambda.iter_mut().for_each(|x| *x *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite()
            && self.b.is_finite()
            && [self.kappa, self.rho, self.eta].iter().all(|x| x.is_finite())
            && self.lambda.iter().all(|x| x.is_finite())
    }
}

/// Query-conditioned first-order Markov token model.
///
/// The logit of token `y` after token `prev` is
/// `A[prev][y] + sum_f x_f B[f][y] + kappa [y copied from the query]
/// + sum_rules lambda_r [y is the rule's target] + rho [content token y
/// already emitted] + eta [y = EOS, prefix non-empty, every copy and rule
/// target emitted]`, where the copy and rule terms switch off once `y` has
/// been emitted. Probabilities are `(1 - V eps) softmax(z) + eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorPolicy {
    cfg: PolicyConfig,
    vocab: Vocab,
    a: Vec<f64>,
    b: Vec<f64>,
    kappa: f64,
    rho: f64,
    eta: f64,
    rules: Vec<LexiconRule>,
    rule_targets: Vec<usize>,
    /// Tokens subject to the repeat term; derived from the vocabulary.
    content: Vec<bool>,
    lambda: Vec<f64>,
}

impl GeneratorPolicy {
    /// Untrained policy: uniform transitions, zero query-feature weights and
    /// prior copy/rule weights. The vocabulary covers every rendering of the
    /// catalog and every rule target.
    pub fn initial(catalog: &[ToolRecord], lexicon: &Lexicon, cfg: PolicyConfig) -> Result<Self> {
        validate_cfg(&cfg)?;
        let rules = rules_from_lexicon(lexicon);
        let tokens = catalog_tokens(catalog, &RenderingId::ALL)
            .into_iter()
            .chain(rules.iter().map(|r| r.target.clone()));
        let vocab = Vocab::new(tokens);
        if vocab.is_empty() {
            return Err(Error::invalid("policy vocabulary is empty"));
        }
        let v = vocab.len();
        let lambda = vec![cfg.lexicon_prior; rules.len()];
        let mut p = Self {
            kappa: cfg.copy_prior,
            rho: cfg.repeat_prior,
            eta: cfg.coverage_prior,
            content: Vec::new(),
            a: vec![0.0; v * v],
            b: vec![0.0; cfg.query_buckets * v],
            cfg,
            vocab,
            rule_targets: Vec::new(),
            rules,
            lambda,
        };
        p.resolve_targets();
        Ok(p)
    }

    fn resolve_targets(&mut self) {
        self.rule_targets = self
            .rules
            .iter()
            .map(|r| self.vocab.id(&r.target).expect("rule targets are in the vocabulary"))
            .collect();
        self.content = self.vocab.tokens().iter().map(|t| is_content(t)).collect();
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn rules(&self) -> &[LexiconRule] {
        &self.rules
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn transition(&self, prev: usize, next: usize) -> f64 {
        self.a[prev * self.vocab.len() + next]
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.a.len() + self.b.len() + N_SCALARS + self.lambda.len()
    }

    /// Flat view over `[A, B, kappa, rho, eta, lambda]`.
    pub fn param(&self, i: usize) -> f64 {
        let (na, nb) = (self.a.len(), self.b.len());
        if i < na {
            self.a[i]
        } else if i < na + nb {
            self.b[i - na]
        } else if i < na + nb + N_SCALARS {
            self.scalars()[i - na - nb]
        } else {
            self.lambda[i - na - nb - N_SCALARS]
        }
    }

    pub fn set_param(&mut self, i: usize, value: f64) {
        let (na, nb) = (self.a.len(), self.b.len());
        if i < na {
            self.a[i] = value
        } else if i < na + nb {
            self.b[i - na] = value
        } else if i < na + nb + N_SCALARS {
            let mut s = self.scalars();
            s[i - na - nb] = value;
            self.set_scalars(s);
        } else {
            self.lambda[i - na - nb - N_SCALARS] = value
        }
    }

    fn scalars(&self) -> [f64; N_SCALARS] {
        [self.kappa, self.rho, self.eta]
    }

    fn set_scalars(&mut self, s: [f64; N_SCALARS]) {
        [self.kappa, self.rho, self.eta] = s;
    }

    /// Gradient entry at the same flat index as [`Self::param`].
    pub fn grad_entry(&self, g: &PolicyGrad, i: usize) -> f64 {
        let v = self.vocab.len();
        let (na, nb) = (self.a.len(), self.b.len());
        if i < na {
            g.a.get(i / v, i % v)
        } else if i < na + nb {
            let j = i - na;
            g.b.get(j / v, j % v)
        } else if i < na + nb + N_SCALARS {
            [g.kappa, g.rho, g.eta][i - na - nb]
        } else {
            g.lambda[i - na - nb - N_SCALARS]
        }
    }

    pub fn condition(&self, query: &str) -> Conditioning {
        let toks = tokenize(query);
        let content: Vec<&String> = toks
            .iter()
            .filter(|t| t.chars().any(char::is_alphanumeric) && !is_stopword(t))
            .collect();
        let mut features: Vec<(usize, f64)> = Vec::new();
        if !content.is_empty() {
            let w = 1.0 / content.len() as f64;
            for t in &content {
                let f = (fnv1a64(t.as_bytes()) % self.cfg.query_buckets as u64) as usize;
                match features.iter_mut().find(|(g, _)| *g == f) {
                    Some((_, x)) => *x += w,
                    None => features.push((f, w)),
                }
            }
            features.sort_by_key(|e| e.0);
        }
        let copy: BTreeSet<usize> = content.iter().filter_map(|t| self.vocab.id(t)).collect();
        let rules = self
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| contains_phrase(&toks, &r.phrase))
            .map(|(i, _)| i)
            .collect();
        Conditioning {
            features,
            copy: copy.into_iter().collect(),
            rules,
        }
    }

    /// True when the prefix is non-empty and every copy and rule target is out.
    fn covered(&self, cond: &Conditioning, prev: usize, emitted: &[bool]) -> bool {
        prev != EOS
            && cond.copy.iter().all(|&y| emitted[y])
            && cond.rules.iter().all(|&r| emitted[self.rule_targets[r]])
    }

    fn logits(&self, cond: &Conditioning, prev: usize, emitted: &[bool], z: &mut [f64]) {
        let v = self.vocab.len();
        z.copy_from_slice(&self.a[prev * v..(prev + 1) * v]);
        for &(f, x) in &cond.features {
            for (zi, bi) in z.iter_mut().zip(&self.b[f * v..(f + 1) * v]) {
                *zi += x * bi;
            }
        }
        for &y in &cond.copy {
            if !emitted[y] {
                z[y] += self.kappa;
            }
        }
        for &r in &cond.rules {
            let y = self.rule_targets[r];
            if !emitted[y] {
                z[y] += self.lambda[r];
            }
        }
        for (y, zy) in z.iter_mut().enumerate() {
            if emitted[y] && self.content[y] {
                *zy += self.rho;
            }
        }
        if self.covered(cond, prev, emitted) {
            z[EOS] += self.eta;
        }
    }

    /// Softmax of `z` in place; returns nothing, `z` becomes probabilities
    /// before the floor is mixed in.
    fn softmax(z: &mut [f64]) {
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in z.iter_mut() {
            *x = (*x - m).exp();
            sum += *x;
        }
        for x in z.iter_mut() {
            *x /= sum;
        }
    }

    fn floor_mix(&self, s: f64) -> f64 {
        (1.0 - self.vocab.len() as f64 * self.cfg.epsilon) * s + self.cfg.epsilon
    }

    /// Next-token distribution after `prefix` (which must not contain EOS).
    pub fn next_distribution(&self, query: &str, prefix: &[u32]) -> Vec<f64> {
        let cond = self.condition(query);
        let v = self.vocab.len();
        let mut emitted = vec![false; v];
        let mut prev = EOS;
        for &t in prefix {
            emitted[t as usize] = true;
            prev = t as usize;
        }
        let mut z = vec![0.0; v];
        self.logits(&cond, prev, &emitted, &mut z);
        Self::softmax(&mut z);
        z.iter().map(|&s| self.floor_mix(s)).collect()
    }

    /// Maps text onto vocabulary ids; out-of-vocabulary tokens are `None`.
    pub fn encode(&self, text: &str) -> Vec<Option<u32>> {
        tokenize(text)
            .iter()
            .map(|t| self.vocab.id(t).map(|i| i as u32))
            .collect()
    }

    pub fn decode(&self, tokens: &[u32]) -> String {
        let words: Vec<&str> = tokens.iter().map(|&t| self.vocab.token(t as usize)).collect();
        detokenize(&words)
    }

    /// Sequence log-probability, with gradient if requested. Out-of-vocabulary
    /// positions score `ln eps`, carry no gradient and reset the context.
    fn score(
        &self,
        cond: &Conditioning,
        seq: &[Option<u32>],
        terminated: bool,
        mut grad: Option<&mut PolicyGrad>,
    ) -> f64 {
        let v = self.vocab.len();
        let eps = self.cfg.epsilon;
        let keep = 1.0 - v as f64 * eps;
        let mut emitted = vec![false; v];
        let mut z = vec![0.0; v];
        let mut prev = EOS;
        let mut total = 0.0;
        let steps = seq.iter().copied().chain(terminated.then_some(Some(EOS as u32)));
        for tok in steps {
            let Some(y) = tok else {
                total += eps.ln();
                prev = EOS;
                continue;
            };
            let y = y as usize;
            self.logits(cond, prev, &emitted, &mut z);
            Self::softmax(&mut z);
            let p = keep * z[y] + eps;
            total += p.ln();
            if let Some(g) = grad.as_deref_mut() {
                // d ln p_y / d z_j = w (delta_yj - s_j), w = keep s_y / p_y
                let w = keep * z[y] / p;
                let mut dz: Vec<f64> = z.iter().map(|&s| -w * s).collect();
                dz[y] += w;
                for (acc, d) in g.a.row_mut(prev).iter_mut().zip(&dz) {
                    *acc += d;
                }
                for &(f, x) in &cond.features {
                    for (acc, d) in g.b.row_mut(f).iter_mut().zip(&dz) {
                        *acc += x * d;
                    }
                }
                for &c in &cond.copy {
                    if !emitted[c] {
                        g.kappa += dz[c];
                    }
                }
                for &r in &cond.rules {
                    let t = self.rule_targets[r];
                    if !emitted[t] {
                        g.lambda[r] += dz[t];
                    }
                }
                for (j, d) in dz.iter().enumerate() {
                    if emitted[j] && self.content[j] {
                        g.rho += d;
                    }
                }
                if self.covered(cond, prev, &emitted) {
                    g.eta += dz[EOS];
                }
            }
            emitted[y] = true;
            prev = y;
        }
        total
    }

    pub fn sequence_log_prob(&self, query: &str, tokens: &[u32], terminated: bool) -> f64 {
        let seq: Vec<Option<u32>> = tokens.iter().map(|&t| Some(t)).collect();
        self.score(&self.condition(query), &seq, terminated, None)
    }

    /// Log-probability of `text` as a complete (terminated) description.
    pub fn log_prob_text(&self, query: &str, text: &str) -> f64 {
        self.score(&self.condition(query), &self.encode(text), true, None)
    }

    pub fn log_prob_grad(&self, query: &str, tokens: &[u32], terminated: bool) -> (f64, PolicyGrad) {
        let seq: Vec<Option<u32>> = tokens.iter().map(|&t| Some(t)).collect();
        let mut g = PolicyGrad::zeros(self.vocab.len(), self.lambda.len());
        let lp = self.score(&self.condition(query), &seq, terminated, Some(&mut g));
        (lp, g)
    }

    /// Decodes one sequence. Temperature 0 is greedy (ties to the lowest
    /// id); otherwise sampling from `softmax(z / T)` after top-k and top-p
    /// truncation. The recorded log-probability is under the untempered
    /// model distribution.
    pub fn generate_one(&self, cond: &Conditioning, cfg: &DecodeConfig, seed: u64) -> GeneratedDescription {
        let v = self.vocab.len();
        let keep = 1.0 - v as f64 * self.cfg.epsilon;
        let mut rng = rng_from(seed);
        let mut emitted = vec![false; v];
        let mut z = vec![0.0; v];
        let mut scratch: Vec<(usize, f64)> = Vec::with_capacity(v);
        let mut tokens = Vec::new();
        let mut prev = EOS;
        let mut lp = 0.0;
        let mut terminated = false;
        while tokens.len() < cfg.max_tokens {
            self.logits(cond, prev, &emitted, &mut z);
            let y = if cfg.temperature == 0.0 {
                argmax(&z)
            } else {
                sample(&z, cfg, &mut scratch, &mut rng)
            };
            Self::softmax(&mut z);
            lp += (keep * z[y] + self.cfg.epsilon).ln();
            if y == EOS {
                terminated = true;
                break;
            }
            tokens.push(y as u32);
            emitted[y] = true;
            prev = y;
        }
        GeneratedDescription {
            text: self.decode(&tokens),
            tokens,
            terminated,
            log_prob: Some(lp),
            seed,
        }
    }

    /// Re-estimates transitions by maximum likelihood with additive
    /// smoothing over every tool under every rendering in `renderings`,
    /// each rendering weighted equally. The vocabulary is extended with the
    /// catalog's tokens; learned query weights and rule weights carry over.
    pub fn warmup_fit(&self, catalog: &[ToolRecord], renderings: &[RenderingId]) -> Result<Self> {
        if catalog.is_empty() {
            return Err(Error::invalid("cannot fit the rewriter on an empty catalog"));
        }
        if renderings.is_empty() {
            return Err(Error::invalid("no renderings to fit on"));
        }
        let vocab = Vocab::new(
            self.vocab
                .tokens()
                .iter()
                .cloned()
                .chain(catalog_tokens(catalog, renderings)),
        );
        let v = vocab.len();
        let mut counts = vec![0.0f64; v * v];
        for tool in catalog {
            for &r in renderings {
                let mut prev = EOS;
                for t in tokenize(&render(tool, r)) {
                    let y = vocab.id(&t).expect("catalog tokens are in the vocabulary");
                    counts[prev * v + y] += 1.0;
                    prev = y;
                }
                counts[prev * v + EOS] += 1.0;
            }
        }
        let alpha = self.cfg.smoothing;
        let mut a = vec![0.0; v * v];
        for r in 0..v {
            let row = &counts[r * v..(r + 1) * v];
            let denom = (row.iter().sum::<f64>() + v as f64 * alpha).ln();
            for y in 0..v {
                a[r * v + y] = (row[y] + alpha).ln() - denom;
            }
        }
        let old_v = self.vocab.len();
        let mut b = vec![0.0; self.cfg.query_buckets * v];
        for (old_id, tok) in self.vocab.tokens().iter().enumerate() {
            let new_id = vocab.id(tok).expect("vocabulary only grows");
            for f in 0..self.cfg.query_buckets {
                b[f * v + new_id] = self.b[f * old_v + old_id];
            }
        }
        let mut out = Self {
            cfg: self.cfg.clone(),
            vocab,
            a,
            b,
            kappa: self.kappa,
            rho: self.rho,
            eta: self.eta,
            rules: self.rules.clone(),
            rule_targets: Vec::new(),
            content: Vec::new(),
            lambda: self.lambda.clone(),
        };
        out.resolve_targets();
        Ok(out)
    }

    /// Applies `params -= step(grad)` through the supplied optimizers.
    pub(crate) fn apply_update(
        &mut self,
        grad: &PolicyGrad,
        opt: &mut PolicyOptimizer,
        lr: f64,
    ) {
        opt.a.step(&mut self.a, &grad.a, lr);
        opt.b.step(&mut self.b, &grad.b, lr);
        let width = N_SCALARS + self.lambda.len();
        let mut small = SparseRows::new(width);
        let row = small.row_mut(0);
        row[..N_SCALARS].copy_from_slice(&[grad.kappa, grad.rho, grad.eta]);
        row[N_SCALARS..].copy_from_slice(&grad.lambda);
        let mut flat: Vec<f64> = self.scalars().into_iter().chain(self.lambda.iter().copied()).collect();
        opt.scalars.step(&mut flat, &small, lr);
        self.set_scalars(flat[..N_SCALARS].try_into().unwrap());
        self.lambda.copy_from_slice(&flat[N_SCALARS..]);
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.b).chain(&self.lambda).chain(&self.scalars()).all(|x| x.is_finite())
    }

    /// Content hash of vocabulary and parameters.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for t in self.vocab.tokens() {
            h.update((t.len() as u64).to_le_bytes());
            h.update(t.as_bytes());
        }
        for x in self.a.iter().chain(&self.b).chain(&self.scalars()).chain(&self.lambda) {
            h.update(x.to_le_bytes());
        }
        crate::encoder::hex16(&h.finalize())
    }

    /// Layout (little-endian): magic `TDPOLICY`, version `u32`, header length
    /// `u64`, JSON header (config, vocabulary, rules, scalar weights), then
    /// `A` (`V*V` `f64`) and `B` (`F*V` `f64`) row-major, then a `u64`
    /// FNV-1a checksum of every preceding byte.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = PolicyHeader {
            config: self.cfg.clone(),
            vocab: self.vocab.tokens().to_vec(),
            rules: self.rules.clone(),
            kappa: self.kappa,
            rho: self.rho,
            eta: self.eta,
            lambda: self.lambda.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::invalid(e.to_string()))?;
        let mut buf = Vec::with_capacity(24 + json.len() + (self.a.len() + self.b.len()) * 8);
        buf.extend_from_slice(POLICY_MAGIC);
        buf.extend_from_slice(&POLICY_VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for x in self.a.iter().chain(&self.b) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        let sum = fnv1a64(&buf);
        buf.extend_from_slice(&sum.to_le_bytes());
        write_atomic(path.as_ref(), &buf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let corrupt = |reason: String| Error::CorruptCheckpoint {
            path: path.to_path_buf(),
            reason,
        };
        if bytes.len() < 28 {
            return Err(corrupt("file shorter than header".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if fnv1a64(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
            return Err(corrupt("checksum mismatch".into()));
        }
        if &body[..8] != POLICY_MAGIC {
            return Err(corrupt("bad magic".into()));
        }
        let version = u32::from_le_bytes(body[8..12].try_into().unwrap());
        if version != POLICY_VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(body[12..20].try_into().unwrap()) as usize;
        let json = body
            .get(20..20usize.saturating_add(hlen))
            .ok_or_else(|| corrupt("truncated header".into()))?;
        let header: PolicyHeader =
            serde_json::from_slice(json).map_err(|e| corrupt(format!("header: {e}")))?;
        let vocab = Vocab::new(header.vocab.iter().cloned());
        if vocab.tokens() != header.vocab.as_slice() {
            return Err(corrupt("vocabulary is not in canonical order".into()));
        }
        let v = vocab.len();
        let na = v * v;
        let nb = header.config.query_buckets * v;
        let raw = &body[20 + hlen..];
        if raw.len() != (na + nb) * 8 {
            return Err(corrupt(format!(
                "expected {} parameter bytes, found {}",
                (na + nb) * 8,
                raw.len()
            )));
        }
        let mut vals = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let a: Vec<f64> = vals.by_ref().take(na).collect();
        let b: Vec<f64> = vals.collect();
        if header.lambda.len() != header.rules.len() {
            return Err(corrupt("rule weight count mismatch".into()));
        }
        if header.rules.iter().any(|r| vocab.id(&r.target).is_none()) {
            return Err(corrupt("rule target missing from vocabulary".into()));
        }
        let mut p = Self {
            cfg: header.config,
            vocab,
            a,
            b,
            kappa: header.kappa,
            rho: header.rho,
            eta: header.eta,
            rules: header.rules,
            rule_targets: Vec::new(),
            content: Vec::new(),
            lambda: header.lambda,
        };
        p.resolve_targets();
        if !p.is_finite() {
            return Err(corrupt("non-finite parameters".into()));
        }
        Ok(p)
    }
}

const POLICY_MAGIC: &[u8; 8] = b"TDPOLICY";
const POLICY_VERSION: u32 = 2;
const N_SCALARS: usize = 3;

/// Rendering field labels repeat by construction and are exempt from the
/// repeat term.
const FIELD_LABELS: [&str; 3] = ["api", "description", "tool"];

fn is_content(token: &str) -> bool {
    token != EOS_TOKEN && token.chars().any(char::is_alphanumeric) && !is_stopword(token) && !FIELD_LABELS.contains(&token)
}

#[derive(Serialize, Deserialize)]
struct PolicyHeader {
    config: PolicyConfig,
    vocab: Vec<String>,
    rules: Vec<LexiconRule>,
    kappa: f64,
    rho: f64,
    eta: f64,
    lambda: Vec<f64>,
}

/// One lazy Adam per parameter block.
#[derive(Debug, Clone)]
pub(crate) struct PolicyOptimizer {
    a: crate::optim::LazyAdam,
    b: crate::optim::LazyAdam,
    scalars: crate::optim::LazyAdam,
}

impl PolicyOptimizer {
    pub(crate) fn new(cfg: crate::optim::AdamConfig) -> Self {
        Self {
            a: crate::optim::LazyAdam::new(cfg),
            b: crate::optim::LazyAdam::new(cfg),
            scalars: crate::optim::LazyAdam::new(cfg),
        }
    }
}

fn validate_cfg(cfg: &PolicyConfig) -> Result<()> {
    if cfg.query_buckets == 0 {
        return Err(Error::invalid("query_buckets must be positive"));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon < 1e-3) {
        return Err(Error::invalid("epsilon must lie in (0, 1e-3)"));
    }
    if !(cfg.smoothing > 0.0 && cfg.smoothing.is_finite()) {
        return Err(Error::invalid("smoothing must be positive"));
    }
    Ok(())
}

fn rules_from_lexicon(lexicon: &Lexicon) -> Vec<LexiconRule> {
    lexicon
        .entries()
        .iter()
        .filter_map(|(tech, colloquial)| {
            let target = tokenize(tech);
            let phrase = tokenize(colloquial);
            (target.len() == 1 && !phrase.is_empty()).then(|| LexiconRule {
                phrase,
                target: target.into_iter().next().unwrap(),
            })
        })
        .collect()
}

fn catalog_tokens(catalog: &[ToolRecord], renderings: &[RenderingId]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for tool in catalog {
        for &r in renderings {
            out.extend(tokenize(&render(tool, r)));
        }
    }
    out
}

fn contains_phrase(tokens: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && tokens.windows(phrase.len()).any(|w| w == phrase)
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in z.iter().enumerate() {
        if x > z[best] {
            best = i;
        }
    }
    best
}

/// Draws from `softmax(z / T)` restricted by top-k then top-p. Candidates
/// are ordered by probability, ties by id, so truncation is deterministic.
fn sample(
    z: &[f64],
    cfg: &DecodeConfig,
    scratch: &mut Vec<(usize, f64)>,
    rng: &mut crate::rng::Rng,
) -> usize {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scratch.clear();
    scratch.extend(z.iter().enumerate().map(|(i, &x)| (i, ((x - m) / cfg.temperature).exp())));
    let order = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if let Some(k) = cfg.top_k {
        if k < scratch.len() {
            scratch.select_nth_unstable_by(k, order);
            scratch.truncate(k);
        }
    }
    if cfg.top_p < 1.0 || cfg.top_k.is_some() {
        scratch.sort_by(order);
    }
    let total: f64 = scratch.iter().map(|e| e.1).sum();
    if cfg.top_p < 1.0 {
        let mut acc = 0.0;
        let mut cut = scratch.len();
        for (i, e) in scratch.iter().enumerate() {
            acc += e.1 / total;
            if acc >= cfg.top_p {
                cut = i + 1;
                break;
            }
        }
        scratch.truncate(cut);
    }
    let total: f64 = scratch.iter().map(|e| e.1).sum();
    let mut u = rng.random::<f64>() * total;
    for &(i, w) in scratch.iter() {
        if u < w {
            return i;
        }
        u -= w;
    }
    scratch.last().expect("at least one candidate").0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Tier;

    pub(crate) fn tool(id: &str, title: &str, api: &str, desc: &str, api_desc: &str) -> ToolRecord {
        ToolRecord {
            id: id.into(),
            title: title.into(),
            api_name: api.into(),
            tool_description: desc.into(),
            api_description: api_desc.into(),
            tier: Tier::G1,
        }
    }

    pub(crate) fn small_catalog() -> Vec<ToolRecord> {
        vec![
            tool("w", "Acme Weather", "getForecast", "Acme offers weather data.", "Get the forecast for a location."),
            tool("s", "Bolt Finance", "getStockQuote", "Bolt offers finance data.", "Get the stock quote for a company."),
            tool("f", "Cirrus Travel", "searchFlights", "Cirrus offers travel data.", "Search the flights for a traveler."),
        ]
    }

    pub(crate) fn small_lexicon() -> Lexicon {
        Lexicon::new([
            ("forecast".to_string(), "what the sky is up to".to_string()),
            ("stock".to_string(), "company shares".to_string()),
        ])
        .unwrap()
    }

    fn uniform() -> GeneratorPolicy {
        let cfg = PolicyConfig {
            copy_prior: 0.0,
            lexicon_prior: 0.0,
            repeat_prior: 0.0,
            coverage_prior: 0.0,
            query_buckets: 16,
            ..PolicyConfig::default()
        };
        GeneratorPolicy::initial(&small_catalog(), &small_lexicon(), cfg).unwrap()
    }

    fn fitted() -> GeneratorPolicy {
        let cfg = PolicyConfig {
            query_buckets: 16,
            ..PolicyConfig::default()
        };
        GeneratorPolicy::initial(&small_catalog(), &small_lexicon(), cfg)
            .unwrap()
            .warmup_fit(&small_catalog(), &RenderingId::ALL)
            .unwrap()
    }

    #[test]
    fn vocabulary_reserves_eos() {
        let p = uniform();
        assert_eq!(p.vocab().token(EOS), EOS_TOKEN);
        assert!(p.vocab().id("forecast").is_some());
        let mut sorted = p.vocab().tokens()[1..].to_vec();
        sorted.sort();
        assert_eq!(sorted, &p.vocab().tokens()[1..]);
    }

    #[test]
    fn uniform_policy_closed_form() {
        let p = uniform();
        let v = p.vocab().len() as f64;
        let toks: Vec<u32> = [3u32, 7, 7, 1, 5].to_vec();
        let lp = p.sequence_log_prob("anything", &toks, false);
        assert!((lp - 5.0 * (1.0 / v).ln()).abs() < 1e-9);
        let lp_t = p.sequence_log_prob("anything", &toks, true);
        assert!((lp_t - 6.0 * (1.0 / v).ln()).abs() < 1e-9);
    }

    #[test]
    fn conditionals_sum_to_one() {
        let p = fitted();
        for (q, prefix) in [
            ("forecast for paris", vec![]),
            ("what the sky is up to", vec![5u32, 9]),
            ("", vec![1u32]),
        ] {
            let dist = p.next_distribution(q, &prefix);
            let sum: f64 = dist.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(dist.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn generated_log_prob_is_reproducible() {
        let p = fitted();
        let cond = p.condition("stock quote please");
        for cfg in [DecodeConfig::bootstrap(), DecodeConfig::candidates()] {
            for seed in 0..5 {
                let d = p.generate_one(&cond, &cfg, seed);
                let lp = p.sequence_log_prob("stock quote please", &d.tokens, d.terminated);
                assert!((lp - d.log_prob.unwrap()).abs() < 1e-9);
                assert!(lp <= 0.0 && lp.is_finite());
                assert!(d.tokens.len() <= cfg.max_tokens);
                assert_eq!(p.generate_one(&cond, &cfg, seed), d);
            }
        }
    }

    #[test]
    fn max_tokens_bounds_length() {
        let p = fitted();
        let cond = p.condition("weather");
        let cfg = DecodeConfig {
            max_tokens: 1,
            ..DecodeConfig::candidates()
        };
        for seed in 0..20 {
            assert!(p.generate_one(&cond, &cfg, seed).tokens.len() <= 1);
        }
    }

    #[test]
    fn warmup_increases_catalog_likelihood() {
        let before = uniform();
        let after = before.warmup_fit(&small_catalog(), &RenderingId::ALL).unwrap();
        let mean_lp = |p: &GeneratorPolicy| {
            let mut total = 0.0;
            let mut n = 0usize;
            for t in small_catalog() {
                for r in RenderingId::ALL {
                    let text = render(&t, r);
                    total += p.log_prob_text("", &text);
                    n += tokenize(&text).len() + 1;
                }
            }
            total / n as f64
        };
        assert!(mean_lp(&after) > mean_lp(&before));
        assert_eq!(after, before.warmup_fit(&small_catalog(), &RenderingId::ALL).unwrap());
    }

    #[test]
    fn single_tool_greedy_follows_full_rendering() {
        let one = vec![tool("w", "Acme Weather", "getForecast", "Acme offers weather data.", "Get the forecast for a location.")];
        let cfg = PolicyConfig {
            repeat_prior: 0.0,
            coverage_prior: 0.0,
            ..PolicyConfig::default()
        };
        let p = GeneratorPolicy::initial(&one, &Lexicon::default(), cfg)
            .unwrap()
            .warmup_fit(&one, &RenderingId::ALL)
            .unwrap();
        let d = p.generate_one(&p.condition(""), &DecodeConfig::inference(), 0);
        let full = tokenize(&render(&one[0], RenderingId::R5));
        let got: Vec<&str> = d.tokens.iter().map(|&t| p.vocab().token(t as usize)).collect();
        // "tool : acme weather | api :" is the longest prefix an order-1
        // chain can follow before the second ":" context repeats
        assert_eq!(got[..7], full[..7]);
    }

    #[test]
    fn lexicon_rule_boosts_target() {
        let p = fitted();
        let forecast = p.vocab().id("forecast").unwrap() as u32;
        let plain = p.next_distribution("tell me about paris", &[]);
        let vague = p.next_distribution("what the sky is up to in paris", &[]);
        assert!(vague[forecast as usize] > plain[forecast as usize] * 5.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = fitted();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.bin");
        p.save(&path).unwrap();
        assert_eq!(GeneratorPolicy::load(&path).unwrap(), p);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(GeneratorPolicy::load(&path).is_err());
    }

    #[test]
    fn greedy_stops_once_query_terms_are_covered() {
        let p = fitted();
        let d = p.generate_one(&p.condition("forecast for acme"), &DecodeConfig::inference(), 0);
        let got: Vec<&str> = d.tokens.iter().map(|&t| p.vocab().token(t as usize)).collect();
        assert!(d.terminated, "{got:?}");
        assert!(got.contains(&"forecast") && got.contains(&"acme"), "{got:?}");
        let content: Vec<&&str> = got.iter().filter(|t| is_content(t)).collect();
        let unique: BTreeSet<&&str> = content.iter().copied().collect();
        assert_eq!(content.len(), unique.len(), "{got:?}");
    }

    #[test]
    fn log_prob_grad_matches_finite_differences() {
        let mut p = fitted();
        let n = p.param_count();
        // exercise the query-feature block too
        for i in (p.a.len()..p.a.len() + p.b.len()).step_by(7) {
            p.set_param(i, ((i % 13) as f64 - 6.0) * 0.05);
        }
        let query = "forecast for acme, what the sky is up to";
        let tokens: Vec<u32> = p.encode("tool : acme weather | get forecast forecast for a location .")
            .into_iter()
            .map(|t| t.unwrap())
            .collect();
        let (_, g) = p.log_prob_grad(query, &tokens, true);
        assert!(g.rho != 0.0 && g.eta != 0.0 && g.kappa != 0.0);
        let h = 1e-6;
        let scalars = p.a.len() + p.b.len();
        let picks = (0..n).step_by(97).chain(scalars..n);
        for i in picks {
            let x = p.param(i);
            p.set_param(i, x + h);
            let up = p.sequence_log_prob(query, &tokens, true);
            p.set_param(i, x - h);
            let down = p.sequence_log_prob(query, &tokens, true);
            p.set_param(i, x);
            let fd = (up - down) / (2.0 * h);
            let an = p.grad_entry(&g, i);
            assert!((fd - an).abs() <= 1e-5 * (1.0 + fd.abs()), "param {i}: fd {fd} analytic {an}");
        }
    }
}
