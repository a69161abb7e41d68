//! Chat-completion providers: an OpenAI-compatible HTTP client, a
//! deterministic offline mock, retry handling and token cost accounting.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::promptgen::{RagMode, TestBudget};
use crate::tokens::TokenCounter;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("provider returned {status}: {message}")]
    Status { status: u16, message: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Transport(_) => true,
            ProviderError::Status { status, .. } => *status == 429 || *status >= 500,
            ProviderError::Malformed(_) | ProviderError::Config(_) => false,
        }
    }
}

#[derive(Debug, Error)]
#[error("generation failed after {attempts} attempt(s): {last}")]
pub struct GenerationFailure {
    pub attempts: u32,
    pub last: ProviderError,
}

/// A single-candidate, temperature-zero completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        ChatRequest {
            model_id: model_id.into(),
            prompt: prompt.into(),
            temperature: 0.0,
            max_output_tokens: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
    pub provider_id: String,
}

/// Token usage of one generation call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRecord {
    pub api_name: String,
    pub model_id: String,
    pub mode: RagMode,
    pub budget: TestBudget,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

pub trait ChatProvider: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_secs(2),
            multiplier: 2,
        }
    }
}

impl RetryPolicy {
    pub fn no_wait(attempts: u32) -> Self {
        RetryPolicy {
            attempts,
            initial_backoff: Duration::ZERO,
            multiplier: 1,
        }
    }
}

/// Calls `provider`, retrying retryable errors with exponential backoff.
pub fn complete_with_retry(
    provider: &dyn ChatProvider,
    request: &ChatRequest,
    policy: RetryPolicy,
) -> Result<ChatResponse, GenerationFailure> {
    let mut backoff = policy.initial_backoff;
    let mut attempt = 0;
    loop {
        attempt += 1;
        match provider.complete(request) {
            Ok(r) => return Ok(r),
            Err(e) if e.is_retryable() && attempt < policy.attempts.max(1) => {
                log::warn!("{} attempt {attempt} failed: {e}; retrying in {backoff:?}", provider.id());
                std::thread::sleep(backoff);
                backoff *= policy.multiplier;
            }
            Err(last) => return Err(GenerationFailure { attempts: attempt, last }),
        }
    }
}

/// Serializes cost records from concurrent generation calls.
#[derive(Debug, Clone, Default)]
pub struct CostCollector {
    records: Arc<Mutex<Vec<CostRecord>>>,
}

impl CostCollector {
    pub fn record(&self, record: CostRecord) {
        self.records.lock().expect("cost collector poisoned").push(record);
    }

    pub fn snapshot(&self) -> Vec<CostRecord> {
        self.records.lock().expect("cost collector poisoned").clone()
    }

    pub fn totals(&self) -> Usage {
        self.records
            .lock()
            .expect("cost collector poisoned")
            .iter()
            .fold(Usage::default(), |acc, r| Usage {
                input_tokens: acc.input_tokens + r.input_tokens,
                output_tokens: acc.output_tokens + r.output_tokens,
            })
    }
}

/// Identifies the experimental cell a generation belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationCell<'a> {
    pub api_name: &'a str,
    pub mode: RagMode,
    pub budget: TestBudget,
}

/// Runs one generation and records its cost.
pub fn complete(
    provider: &dyn ChatProvider,
    request: &ChatRequest,
    policy: RetryPolicy,
    cell: &GenerationCell<'_>,
    collector: &CostCollector,
) -> Result<ChatResponse, GenerationFailure> {
    let response = complete_with_retry(provider, request, policy)?;
    collector.record(CostRecord {
        api_name: cell.api_name.to_owned(),
        model_id: request.model_id.clone(),
        mode: cell.mode,
        budget: cell.budget,
        input_tokens: response.usage.input_tokens,
        output_tokens: response.usage.output_tokens,
    });
    Ok(response)
}

// ============================================================================
// OpenAI-compatible HTTP provider
// ============================================================================

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpProviderConfig {
    /// Base URL up to and excluding `/chat/completions`.
    pub base_url: String,
    /// Environment variable holding the bearer token; unset means no auth header.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_http_timeout")]
    pub timeout_secs: u64,
}

fn default_http_timeout() -> u64 {
    600
}

pub struct OpenAiCompatProvider {
    config: HttpProviderConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    counter: Arc<dyn TokenCounter>,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    n: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

impl OpenAiCompatProvider {
    pub fn new(config: HttpProviderConfig, counter: Arc<dyn TokenCounter>) -> Result<Self, ProviderError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| ProviderError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(OpenAiCompatProvider {
            config,
            api_key,
            client,
            counter,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl ChatProvider for OpenAiCompatProvider {
    fn id(&self) -> String {
        format!("openai-compatible:{}", self.config.base_url)
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let body = WireRequest {
            model: &request.model_id,
            messages: vec![WireMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: request.temperature,
            n: 1,
            max_tokens: request.max_output_tokens,
        };
        let mut req = self.client.post(self.endpoint()).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Status {
                status: status.as_u16(),
                message: text.chars().take(500).collect(),
            });
        }
        let wire: WireResponse = serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        let content = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Malformed("no choices in response".into()))?;
        let reported = wire.usage.unwrap_or(WireUsage {
            prompt_tokens: None,
            completion_tokens: None,
        });
        let usage = Usage {
            input_tokens: reported
                .prompt_tokens
                .unwrap_or_else(|| self.counter.count(&request.prompt) as u64),
            output_tokens: reported
                .completion_tokens
                .unwrap_or_else(|| self.counter.count(&content) as u64),
        };
        Ok(ChatResponse {
            text: content,
            usage,
            provider_id: self.id(),
        })
    }
}

// ============================================================================
// Mock provider
// ============================================================================

/// One canned test method.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockTest {
    pub name: String,
    /// Method body, already indented for a method (8 spaces).
    pub body: String,
    /// Emitted only when the prompt contains this text.
    #[serde(default)]
    pub requires: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockSuite {
    pub imports: String,
    pub class_name: String,
    pub tests: Vec<MockTest>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockFixtures {
    pub apis: BTreeMap<String, MockSuite>,
}

impl MockFixtures {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

/// Deterministic stand-in for a hosted model.
///
/// It recognizes the target API from the query sentence and the test budget
/// from the budget clause, then renders a canned suite for that API (or a
/// generic one naming it) with exactly the requested number of tests.
pub struct MockProvider {
    fixtures: MockFixtures,
    counter: Arc<dyn TokenCounter>,
    api_pattern: Regex,
    budget_pattern: Regex,
}

impl MockProvider {
    pub fn new(fixtures: MockFixtures, counter: Arc<dyn TokenCounter>) -> Self {
        MockProvider {
            fixtures,
            counter,
            api_pattern: Regex::new(r"functionality of (\S+) in ").expect("regex"),
            budget_pattern: Regex::new(r"(?i)generate exactly (\d+) unit test cases").expect("regex"),
        }
    }

    fn fallback_suite(api: &str) -> MockSuite {
        let slug: String = api
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
            .collect();
        MockSuite {
            imports: "import unittest".into(),
            class_name: "TestGeneratedApi".into(),
            tests: vec![MockTest {
                name: format!("test_{slug}_reference"),
                body: format!("        api_name = {api:?}\n        self.assertTrue(api_name)"),
                requires: None,
            }],
        }
    }

    /// Renders the response for a prompt.
    pub fn respond(&self, prompt: &str) -> String {
        let api = self
            .api_pattern
            .captures(prompt)
            .map(|c| c[1].to_string())
            .unwrap_or_else(|| "unknown".into());
        let budget: Option<usize> = self
            .budget_pattern
            .captures(prompt)
            .and_then(|c| c[1].parse().ok());
        let suite = self
            .fixtures
            .apis
            .get(&api)
            .cloned()
            .unwrap_or_else(|| MockProvider::fallback_suite(&api));
        let eligible: Vec<&MockTest> = suite
            .tests
            .iter()
            .filter(|t| t.requires.as_deref().is_none_or(|r| prompt.contains(r)))
            .collect();
        let chosen: Vec<(String, &str)> = match budget {
            None => eligible.iter().map(|t| (t.name.clone(), t.body.as_str())).collect(),
            Some(_) if eligible.is_empty() => Vec::new(),
            Some(n) => (0..n)
                .map(|i| {
                    let t = eligible[i % eligible.len()];
                    let round = i / eligible.len();
                    let name = if round == 0 { t.name.clone() } else { format!("{}_{}", t.name, round + 1) };
                    (name, t.body.as_str())
                })
                .collect(),
        };

        let mut code = format!("{}\n\n\nclass {}(unittest.TestCase):\n", suite.imports.trim_end(), suite.class_name);
        if chosen.is_empty() {
            code.push_str("    pass\n");
        }
        for (i, (name, body)) in chosen.iter().enumerate() {
            if i > 0 {
                code.push('\n');
            }
            code.push_str(&format!("    def {name}(self):\n{}\n", body.trim_end()));
        }
        code.push_str("\n\nif __name__ == \"__main__\":\n    unittest.main()\n");
        format!(
            "Here is a unit test suite for `{api}` using unittest.\n\n```python\n{code}```\n\nEach test targets a separate behaviour.\n"
        )
    }
}

impl ChatProvider for MockProvider {
    fn id(&self) -> String {
        "mock".into()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let text = self.respond(&request.prompt);
        Ok(ChatResponse {
            usage: Usage {
                input_tokens: self.counter.count(&request.prompt) as u64,
                output_tokens: self.counter.count(&text) as u64,
            },
            text,
            provider_id: self.id(),
        })
    }
}
