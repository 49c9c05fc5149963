use rand::Rng as _;

use super::{RenderingId, ToolRecord};
use crate::rng::Rng;

const SEP: &str = " | ";

/// Serializes a tool under one rendering convention.
///
/// R1 is the bare title. R2..R5 label every field (`Tool: …`, `API: …`,
/// `Tool Description: …`, `API Description: …`) and join them with `" | "`.
/// Empty fields are skipped together with their separator.
pub fn render(tool: &ToolRecord, r: RenderingId) -> String {
    let title = ("Tool: ", tool.title.as_str());
    let api = ("API: ", tool.api_name.as_str());
    let tool_desc = ("Tool Description: ", tool.tool_description.as_str());
    let api_desc = ("API Description: ", tool.api_description.as_str());

    let fields: &[(&str, &str)] = match r {
        RenderingId::R1 => return tool.title.trim().to_string(),
        RenderingId::R2 => &[title, api],
        RenderingId::R3 => &[title, api, tool_desc],
        RenderingId::R4 => &[title, api, api_desc],
        RenderingId::R5 => &[title, api, tool_desc, api_desc],
    };

    let mut out = String::new();
    for (label, value) in fields {
        let value = value.trim();
        if value.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push_str(SEP);
        }
        out.push_str(label);
        out.push_str(value);
    }
    out
}

/// Draws renderings uniformly from an allowed subset (all five by default).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderingSampler {
    allowed: Vec<RenderingId>,
}

impl RenderingSampler {
    pub fn uniform() -> Self {
        Self {
            allowed: RenderingId::ALL.to_vec(),
        }
    }

    /// Restricts sampling to a single member.
    pub fn only(r: RenderingId) -> Self {
        Self { allowed: vec![r] }
    }

    pub fn sample(&self, rng: &mut Rng) -> RenderingId {
        self.allowed[rng.random_range(0..self.allowed.len())]
    }
}

impl Default for RenderingSampler {
    fn default() -> Self {
        Self::uniform()
    }
}

/// Uniform draw over the five renderings.
pub fn sample_rendering(rng: &mut Rng) -> RenderingId {
    RenderingId::ALL[rng.random_range(0..RenderingId::ALL.len())]
}
