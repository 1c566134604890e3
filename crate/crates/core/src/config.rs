//! Engine configuration: a flat `key = value` TOML file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aligner::{EmbeddingProvider, HashingEmbedder, HttpEmbedder, DEFAULT_SUGGEST_THRESHOLD, HASHING_DIM};
use crate::generator::{GenerationConfig, HttpLlm, LlmError, LlmProvider, MockLlm};
use crate::ingest::{HttpParserService, OcrCommand, OfflineParserService, ParserService, DEFAULT_OVERLAP};
use crate::sampler::{Bm25Params, DEFAULT_SHOTS};
use crate::verify::Bands;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// GROBID-compatible base URL; the offline parser is used when unset.
    pub structured_parser_url: Option<String>,
    /// Tika-compatible base URL.
    pub generic_parser_url: Option<String>,
    /// External OCR command line with `{input}` and `{output}` placeholders.
    pub ocr_command: Option<String>,

    pub llm_base_url: Option<String>,
    pub llm_model: String,
    /// Name of the environment variable holding the LLM API token.
    pub llm_token_env: String,
    /// Scripted mock responses; takes precedence over `llm_base_url`.
    pub llm_mock_fixture: Option<String>,
    /// Context budget in characters; the chunking window derives from it.
    pub window: usize,
    pub overlap: f64,
    pub prompt_overhead: f64,

    pub embedding_url: Option<String>,
    pub embedding_dim: usize,
    pub suggest_threshold: f64,

    pub supported_threshold: u8,
    pub partial_threshold: u8,

    pub k1: f64,
    pub b: f64,
    pub k: usize,
    pub m: usize,
    pub seed: u64,

    pub pilot_cap: usize,
    /// Worker threads; 0 means one per logical core.
    pub jobs: usize,
    /// Name of the environment variable holding the API bearer token. The
    /// API is open when the variable is unset.
    pub api_token_env: String,
    pub exact_case: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            structured_parser_url: None,
            generic_parser_url: None,
            ocr_command: None,
            llm_base_url: None,
            llm_model: "gpt-4o".into(),
            llm_token_env: "CURATE_LLM_TOKEN".into(),
            llm_mock_fixture: None,
            window: 8000,
            overlap: DEFAULT_OVERLAP,
            prompt_overhead: 0.20,
            embedding_url: None,
            embedding_dim: HASHING_DIM,
            suggest_threshold: DEFAULT_SUGGEST_THRESHOLD,
            supported_threshold: 90,
            partial_threshold: 60,
            k1: 1.2,
            b: 0.75,
            k: 10,
            m: DEFAULT_SHOTS,
            seed: 0,
            pilot_cap: 10,
            jobs: 0,
            api_token_env: "CURATE_API_TOKEN".into(),
            exact_case: false,
        }
    }
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: EngineConfig = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.window == 0 {
            return bad("window must be positive");
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return bad("overlap must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.prompt_overhead) {
            return bad("prompt_overhead must be in [0, 1)");
        }
        if self.partial_threshold > self.supported_threshold || self.supported_threshold > 100 {
            return bad("thresholds must satisfy partial <= supported <= 100");
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive");
        }
        if !(self.k1 >= 0.0 && (0.0..=1.0).contains(&self.b)) {
            return bad("k1 must be >= 0 and b in [0, 1]");
        }
        Ok(())
    }

    pub fn bm25(&self) -> Bm25Params {
        Bm25Params { k1: self.k1, b: self.b }
    }

    pub fn bands(&self) -> Bands {
        Bands {
            supported: self.supported_threshold,
            partial: self.partial_threshold,
        }
    }

    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            shots: self.m,
            overlap_fraction: self.overlap,
            prompt_overhead: self.prompt_overhead,
            bm25: self.bm25(),
        }
    }

    pub fn llm(&self) -> Result<Box<dyn LlmProvider>, LlmError> {
        if let Some(path) = &self.llm_mock_fixture {
            let mut mock = MockLlm::from_file(Path::new(path))?;
            mock.set_context_chars(self.window);
            return Ok(Box::new(mock));
        }
        match &self.llm_base_url {
            Some(url) => Ok(Box::new(HttpLlm::new(
                url.clone(),
                self.llm_model.clone(),
                std::env::var(&self.llm_token_env).ok(),
                self.window,
            ))),
            None => Err(LlmError::Fixture(
                "no LLM configured: set llm_base_url or llm_mock_fixture".into(),
            )),
        }
    }

    pub fn embedder(&self) -> Box<dyn EmbeddingProvider> {
        match &self.embedding_url {
            Some(url) => Box::new(HttpEmbedder::new(url.clone(), self.embedding_dim)),
            None => Box::new(HashingEmbedder::new(self.embedding_dim)),
        }
    }

    pub fn parser_service(&self) -> Box<dyn ParserService> {
        if self.structured_parser_url.is_none() && self.generic_parser_url.is_none() {
            Box::new(OfflineParserService)
        } else {
            Box::new(HttpParserService::new(
                self.structured_parser_url.clone(),
                self.generic_parser_url.clone(),
            ))
        }
    }

    pub fn ocr(&self) -> Option<OcrCommand> {
        self.ocr_command.as_deref().and_then(OcrCommand::parse)
    }

    /// The API bearer token, when the configured variable is set.
    pub fn api_token(&self) -> Option<String> {
        std::env::var(&self.api_token_env).ok().filter(|t| !t.is_empty())
    }
}
