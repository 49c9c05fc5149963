use std::thread;
use std::time::Duration;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{clean, DecodeConfig, GeneratedDescription, PromptTemplate, Rewriter};
use crate::error::{Error, Result};
use crate::rng::{derive, Rng};

/// Chat-completions endpoint settings. The credential itself is never
/// stored here, only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            api_key_env: "TOOLDESK_API_KEY".into(),
            timeout_secs: 60,
            max_retries: 3,
            retry_backoff_ms: 500,
        }
    }
}

/// Generation through an external LLM. Outputs are cleaned before they are
/// returned and carry no log-probability, so they cannot be DPO-trained.
#[derive(Debug)]
pub struct RemoteRewriter {
    cfg: RemoteConfig,
    template: PromptTemplate,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

impl RemoteRewriter {
    pub fn new(cfg: RemoteConfig, template: PromptTemplate) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            cfg,
            template,
            agent,
        }
    }

    fn complete_once(&self, body: &serde_json::Value) -> Result<String> {
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Ok(key) = std::env::var(&self.cfg.api_key_env) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| Error::Http {
            status: None,
            retriable: true,
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(Error::Http {
                status: Some(status),
                retriable: status == 429 || status >= 500,
                message: text.chars().take(200).collect(),
            });
        }
        let parsed: ChatResponse = resp.body_mut().read_json().map_err(|e| Error::Http {
            status: Some(status),
            retriable: false,
            message: format!("malformed response: {e}"),
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::Http {
                status: Some(status),
                retriable: false,
                message: "response has no message content".into(),
            })
    }

    fn complete(&self, body: &serde_json::Value) -> Result<String> {
        let mut attempt = 0;
        loop {
            match self.complete_once(body) {
                Err(Error::Http {
                    retriable: true,
                    status,
                    message,
                }) if attempt < self.cfg.max_retries => {
                    attempt += 1;
                    log::warn!("retrying request ({attempt}/{}): {status:?} {message}", self.cfg.max_retries);
                    thread::sleep(Duration::from_millis(self.cfg.retry_backoff_ms << (attempt - 1)));
                }
                other => return other,
            }
        }
    }
}

impl Rewriter for RemoteRewriter {
    fn generate(
        &self,
        query: &str,
        cfg: &DecodeConfig,
        n: usize,
        rng: &mut Rng,
    ) -> Result<Vec<GeneratedDescription>> {
        if n == 0 {
            return Err(Error::invalid("n must be at least 1"));
        }
        cfg.validate()?;
        let prompt = self.template.apply(query);
        let base: u64 = rng.random();
        (0..n)
            .map(|j| {
                let seed = derive(base, j as u64);
                let body = json!({
                    "model": self.cfg.model,
                    "messages": [
                        {"role": "system", "content": prompt.system},
                        {"role": "user", "content": prompt.user},
                    ],
                    "temperature": cfg.temperature,
                    "top_p": cfg.top_p,
                    "max_tokens": cfg.max_tokens,
                    "seed": seed >> 1,
                });
                let raw = self.complete(&body)?;
                Ok(GeneratedDescription {
                    text: clean(&raw, query),
                    tokens: Vec::new(),
                    terminated: true,
                    log_prob: None,
                    seed,
                })
            })
            .collect()
    }
}
