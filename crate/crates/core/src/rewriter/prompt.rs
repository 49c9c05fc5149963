use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PLACEHOLDER: &str = "{query}";

pub const HYDE_SYSTEM: &str = "You are an expert at understanding API tool pipelines. When given a user query, you describe the sequence of API calls needed to fulfill it. Each description should focus on what the tool does, what inputs it takes, and what data it returns. Write each tool's description as a single concise technical sentence.";

pub const HYDE_USER: &str = "User query: {query}\n\nThink about the full pipeline of API calls needed to answer the query. Describe each API tool in the pipeline in order, explaining what data it provides and how it feeds into the next step. Be concise and technical.";

/// Delimiter between system and user parts when a single string is needed.
pub const PART_DELIMITER: &str = "\n\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    system: String,
    user: String,
}

/// A rendered prompt, kept as separate chat messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    pub fn joined(&self) -> String {
        format!("{}{}{}", self.system, PART_DELIMITER, self.user)
    }
}

impl PromptTemplate {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Result<Self> {
        let user = user.into();
        let count = user.matches(PLACEHOLDER).count();
        if count != 1 {
            return Err(Error::invalid(format!(
                "user template must contain `{PLACEHOLDER}` exactly once (found {count})"
            )));
        }
        Ok(Self {
            system: system.into(),
            user,
        })
    }

    pub fn hyde() -> Self {
        Self::new(HYDE_SYSTEM, HYDE_USER).expect("built-in template is valid")
    }

    /// Substitutes the query once. Placeholder text inside the query itself
    /// is left alone.
    pub fn apply(&self, query: &str) -> Prompt {
        let (before, after) = self
            .user
            .split_once(PLACEHOLDER)
            .expect("validated at construction");
        Prompt {
            system: self.system.clone(),
            user: format!("{before}{query}{after}"),
        }
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::hyde()
    }
}

pub fn apply_prompt(template: &PromptTemplate, query: &str) -> Prompt {
    template.apply(query)
}
