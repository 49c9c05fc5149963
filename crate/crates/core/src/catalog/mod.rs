//! Tool catalog, query sets, renderings and training-pair construction.

mod corpus;
mod render;
mod subset;
mod vague;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corpus::{load_corpus, read_corpus, write_corpus, Corpus, CorpusSummary};
pub use render::{render, sample_rendering, RenderingSampler};
pub use subset::stratified_subset;
pub use vague::{load_lexicon, parse_lexicon, vaguify, Lexicon, VaguifyConfig};

/// ToolBench difficulty stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    G1,
    G2,
    G3,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::G1, Tier::G2, Tier::G3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::G1 => "G1",
            Tier::G2 => "G2",
            Tier::G3 => "G3",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "G1" => Ok(Tier::G1),
            "G2" => Ok(Tier::G2),
            "G3" => Ok(Tier::G3),
            other => Err(Error::invalid(format!("unknown tier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    EvalStandard,
    EvalVague,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::EvalStandard => "eval_standard",
            Split::EvalVague => "eval_vague",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "eval_standard" => Ok(Split::EvalStandard),
            "eval_vague" => Ok(Split::EvalVague),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRecord {
    pub id: String,
    pub title: String,
    pub api_name: String,
    pub tool_description: String,
    pub api_description: String,
    pub tier: Tier,
}

/// One of the five serialization conventions. `R5` (the full record) is the
/// index-time rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RenderingId {
    R1,
    R2,
    R3,
    R4,
    R5,
}

impl RenderingId {
    pub const ALL: [RenderingId; 5] = [
        RenderingId::R1,
        RenderingId::R2,
        RenderingId::R3,
        RenderingId::R4,
        RenderingId::R5,
    ];

    pub const INDEX: RenderingId = RenderingId::R5;

    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get((code as usize).checked_sub(1)?).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryExample {
    pub query_id: String,
    pub text: String,
    pub gold_tool_ids: Vec<String>,
    pub tier: Tier,
    pub split: Split,
}

/// Where a training anchor came from. Description-only stages assert that no
/// `Query` anchors reach them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorSource {
    Query,
    Description,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub query_id: String,
    pub anchor: String,
    pub tool_id: String,
    pub rendering: RenderingId,
    pub source: AnchorSource,
}

/// How renderings are chosen while flattening.
#[derive(Debug, Clone)]
pub enum RenderingChoice {
    Fixed(RenderingId),
    Sampled(RenderingSampler),
}

/// Expands each (query, gold set) example into one pair per gold tool.
///
/// Renderings are drawn in output order, so a fixed seed gives a fixed
/// assignment.
pub fn flatten(
    examples: &[QueryExample],
    choice: &RenderingChoice,
    rng: &mut crate::rng::Rng,
) -> Result<Vec<TrainingPair>> {
    let mut out = Vec::with_capacity(examples.iter().map(|e| e.gold_tool_ids.len()).sum());
    for ex in examples {
        if ex.gold_tool_ids.is_empty() {
            return Err(Error::EmptyGold(ex.query_id.clone()));
        }
        if ex.split != Split::Train {
            return Err(Error::invalid(format!(
                "query `{}` belongs to split {}, only train examples are flattened",
                ex.query_id, ex.split
            )));
        }
        for tool_id in &ex.gold_tool_ids {
            let rendering = match choice {
                RenderingChoice::Fixed(r) => *r,
                RenderingChoice::Sampled(s) => s.sample(rng),
            };
            out.push(TrainingPair {
                query_id: ex.query_id.clone(),
                anchor: ex.text.clone(),
                tool_id: tool_id.clone(),
                rendering,
                source: AnchorSource::Query,
            });
        }
    }
    Ok(out)
}
