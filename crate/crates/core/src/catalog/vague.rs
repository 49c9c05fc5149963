use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng as _;

use super::{QueryExample, Split};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Technical token -> colloquial phrase table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: Vec<(String, String)>,
    by_token: HashMap<String, usize>,
}

impl Lexicon {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut lex = Lexicon::default();
        for (tech, colloquial) in entries {
            let key = tech.trim().to_lowercase();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::invalid(format!(
                    "lexicon key `{tech}` must be a single non-empty token"
                )));
            }
            if lex.by_token.insert(key.clone(), lex.entries.len()).is_some() {
                return Err(Error::DuplicateId {
                    kind: "lexicon",
                    id: key,
                });
            }
            lex.entries.push((key, colloquial.trim().to_string()));
        }
        Ok(lex)
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn colloquial(&self, token: &str) -> Option<&str> {
        self.by_token
            .get(&token.to_lowercase())
            .map(|&i| self.entries[i].1.as_str())
    }
}

/// Parses two tab-separated columns per line. `#` starts a comment line.
pub fn parse_lexicon(text: &str) -> Result<Lexicon> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next(), cols.next()) {
            (Some(a), Some(b), None) if !a.trim().is_empty() && !b.trim().is_empty() => {
                entries.push((a.to_string(), b.to_string()))
            }
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected `technical_token<TAB>colloquial_phrase`".into(),
                })
            }
        }
    }
    Lexicon::new(entries)
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaguifyConfig {
    pub fillers: Vec<String>,
    /// Chance of inserting a filler when at least one token was substituted.
    /// Queries with no substitution always receive a filler (if any exist).
    pub filler_prob: f64,
}

impl Default for VaguifyConfig {
    fn default() -> Self {
        Self {
            fillers: ["honestly", "you know", "kinda", "basically", "so um"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            filler_prob: 0.5,
        }
    }
}

/// Produces a colloquial paraphrase of an evaluation query.
///
/// Tokens are matched case-insensitively after stripping surrounding
/// punctuation, which is kept in place. Gold set and tier are copied
/// unchanged; the id gains a `-vague` suffix.
pub fn vaguify(
    q: &QueryExample,
    lexicon: &Lexicon,
    cfg: &VaguifyConfig,
    rng: &mut Rng,
) -> QueryExample {
    let mut substituted = 0usize;
    let words: Vec<String> = q
        .text
        .split_whitespace()
        .map(|word| {
            let start = word.find(|c: char| c.is_alphanumeric());
            let end = word.rfind(|c: char| c.is_alphanumeric());
            let (Some(start), Some(end)) = (start, end) else {
                return word.to_string();
            };
            let end = end + word[end..].chars().next().map_or(1, char::len_utf8);
            match lexicon.colloquial(&word[start..end]) {
                Some(phrase) => {
                    substituted += 1;
                    format!("{}{}{}", &word[..start], phrase, &word[end..])
                }
                None => word.to_string(),
            }
        })
        .collect();
    let mut text = words.join(" ");

    let insert = !cfg.fillers.is_empty()
        && (substituted == 0 || rng.random_bool(cfg.filler_prob.clamp(0.0, 1.0)));
    if insert {
        let filler = &cfg.fillers[rng.random_range(0..cfg.fillers.len())];
        text = if rng.random_bool(0.5) {
            format!("{filler}, {text}")
        } else {
            format!("{text}, {filler}")
        };
    }

    QueryExample {
        query_id: format!("{}-vague", q.query_id),
        text,
        gold_tool_ids: q.gold_tool_ids.clone(),
        tier: q.tier,
        split: Split::EvalVague,
    }
}
