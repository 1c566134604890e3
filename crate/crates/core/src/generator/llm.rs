use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::prompt::{has_demonstration, ARTICLE_END, ARTICLE_START};

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("LLM transport error: {0}")]
    Transport(String),
    #[error("LLM returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("LLM response has no completion text")]
    EmptyResponse,
    #[error("no scripted response for prompt {0}")]
    NoScriptedResponse(String),
    #[error("cannot load mock fixture: {0}")]
    Fixture(String),
}

/// A text-completion backend.
///
/// Implementations must tolerate concurrent calls.
pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;
    /// Context budget in characters.
    fn context_chars(&self) -> usize;
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

/// Hex SHA-256 of the prompt; the key of scripted mock responses.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Chat-completions style HTTP endpoint.
#[derive(Debug, Clone)]
pub struct HttpLlm {
    base_url: String,
    model: String,
    token: Option<String>,
    context_chars: usize,
    client: reqwest::blocking::Client,
}

impl HttpLlm {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, token: Option<String>, context_chars: usize) -> Self {
        HttpLlm {
            base_url: base_url.into(),
            model: model.into(),
            token,
            context_chars,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(600))
                .build()
                .expect("http client"),
        }
    }
}

impl LlmProvider for HttpLlm {
    fn name(&self) -> &str {
        &self.model
    }

    fn context_chars(&self) -> usize {
        self.context_chars
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.client.post(url).json(&body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LlmError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| LlmError::Transport(format!("invalid JSON response: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or(LlmError::EmptyResponse)
    }
}

/// Rule matched against the article section of a prompt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub article_contains: String,
    /// Answer for prompts without a demonstration block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_shot: Option<String>,
    /// Answer for prompts with at least one demonstration block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub with_examples: Option<String>,
    /// Answer for explanation requests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

/// Scripted responses. Lookup order: exact prompt hash, then the first rule
/// whose needle occurs in the article section, then `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockFixture {
    #[serde(default = "default_context_chars")]
    pub context_chars: usize,
    #[serde(default)]
    pub responses: BTreeMap<String, String>,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

fn default_context_chars() -> usize {
    8000
}

impl Default for MockFixture {
    fn default() -> Self {
        MockFixture {
            context_chars: default_context_chars(),
            responses: BTreeMap::new(),
            rules: Vec::new(),
            default: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MockLlm {
    fixture: MockFixture,
}

impl MockLlm {
    pub fn new(fixture: MockFixture) -> Self {
        MockLlm { fixture }
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))?;
        let fixture = serde_json::from_str(&text).map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))?;
        Ok(MockLlm::new(fixture))
    }

    pub fn fixture(&self) -> &MockFixture {
        &self.fixture
    }

    pub fn set_context_chars(&mut self, context_chars: usize) {
        self.fixture.context_chars = context_chars;
    }
}

fn article_section(prompt: &str) -> &str {
    let start = prompt.rfind(ARTICLE_START).map(|i| i + ARTICLE_START.len()).unwrap_or(0);
    let end = prompt[start..].find(ARTICLE_END).map(|i| start + i).unwrap_or(prompt.len());
    &prompt[start..end]
}

impl LlmProvider for MockLlm {
    fn name(&self) -> &str {
        "mock"
    }

    fn context_chars(&self) -> usize {
        self.fixture.context_chars
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let hash = prompt_hash(prompt);
        if let Some(r) = self.fixture.responses.get(&hash) {
            return Ok(r.clone());
        }
        let article = article_section(prompt);
        let explaining = prompt.starts_with(crate::verify::EXPLANATION_PREFIX);
        for rule in &self.fixture.rules {
            if !article.contains(&rule.article_contains) {
                continue;
            }
            let picked = if explaining {
                rule.explanation.as_ref()
            } else if has_demonstration(prompt) {
                rule.with_examples.as_ref().or(rule.zero_shot.as_ref())
            } else {
                rule.zero_shot.as_ref()
            };
            if let Some(r) = picked {
                return Ok(r.clone());
            }
        }
        self.fixture
            .default
            .clone()
            .ok_or(LlmError::NoScriptedResponse(hash))
    }
}
