//! Prompting, description generation and output cleaning.

mod clean;
mod policy;
mod prompt;
mod remote;
mod tokenize;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive, Rng};

pub use clean::clean;
pub use policy::{
    Conditioning, GeneratorPolicy, LexiconRule, PolicyConfig, PolicyGrad, Vocab, EOS, EOS_TOKEN,
};
pub(crate) use policy::PolicyOptimizer;
pub use prompt::{apply_prompt, Prompt, PromptTemplate, HYDE_SYSTEM, HYDE_USER};
pub use remote::{RemoteConfig, RemoteRewriter};
pub use tokenize::{detokenize, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    /// 0 means greedy decoding.
    pub temperature: f64,
    pub top_p: f64,
    /// `None` keeps the whole vocabulary.
    pub top_k: Option<usize>,
    pub max_tokens: usize,
}

impl DecodeConfig {
    /// Greedy, 150 tokens: dataset generation.
    pub fn bootstrap() -> Self {
        Self {
            temperature: 0.0,
            top_p: 1.0,
            top_k: None,
            max_tokens: 150,
        }
    }

    /// T = 0.7, top-p 0.95, top-k 50, 300 tokens: preference candidates.
    pub fn candidates() -> Self {
        Self {
            temperature: 0.7,
            top_p: 0.95,
            top_k: Some(50),
            max_tokens: 300,
        }
    }

    /// Greedy, 150 tokens: retrieval-time rewriting.
    pub fn inference() -> Self {
        Self::bootstrap()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature {} must be >= 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::invalid(format!("top_p {} must lie in (0, 1]", self.top_p)));
        }
        if self.top_k == Some(0) {
            return Err(Error::invalid("top_k must be at least 1"));
        }
        Ok(())
    }
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self::inference()
    }
}

/// One rewriter output. `text` is the raw detokenized output, before
/// cleaning; `log_prob` is `None` when the producer cannot score sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedDescription {
    pub text: String,
    pub tokens: Vec<u32>,
    pub terminated: bool,
    pub log_prob: Option<f64>,
    pub seed: u64,
}

/// Anything that turns a query into candidate tool descriptions.
pub trait Rewriter {
    fn generate(
        &self,
        query: &str,
        cfg: &DecodeConfig,
        n: usize,
        rng: &mut Rng,
    ) -> Result<Vec<GeneratedDescription>>;
}

impl Rewriter for GeneratorPolicy {
    fn generate(
        &self,
        query: &str,
        cfg: &DecodeConfig,
        n: usize,
        rng: &mut Rng,
    ) -> Result<Vec<GeneratedDescription>> {
        generate(self, query, cfg, n, rng)
    }
}

/// Draws `n` descriptions. One base seed is taken from `rng`; candidate `j`
/// uses `derive(base, j)`, recorded on the output.
pub fn generate(
    policy: &GeneratorPolicy,
    query: &str,
    cfg: &DecodeConfig,
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<GeneratedDescription>> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    cfg.validate()?;
    if policy.vocab().is_empty() {
        return Err(Error::invalid("policy vocabulary is empty"));
    }
    let base: u64 = rng.random();
    let cond = policy.condition(query);
    Ok((0..n)
        .map(|j| policy.generate_one(&cond, cfg, derive(base, j as u64)))
        .collect())
}

/// Log-probability of a description produced by `policy` (or any token
/// sequence over its vocabulary).
pub fn log_prob(policy: &GeneratorPolicy, query: &str, d: &GeneratedDescription) -> f64 {
    policy.sequence_log_prob(query, &d.tokens, d.terminated)
}
