//! Chat-completion access: an HTTP backend for real providers and a
//! deterministic mock that makes whole search runs reproducible offline.

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::augment;
use crate::prompt::{parse_markers, PROPOSE_MARKER};
use crate::space::{decode, ArchitectureDescriptor, SearchSpaceDef};
use crate::util::mix_seed;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("mock policy cannot read the prompt: {0}")]
    MockParse(String),
    #[error("invalid llm configuration: {0}")]
    Config(String),
}

impl LlmError {
    fn is_transient(&self) -> bool {
        matches!(self, LlmError::Transport(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mock" => Ok(BackendKind::Mock),
            "http" => Ok(BackendKind::Http),
            other => Err(format!("unknown llm backend {other:?}; expected mock or http")),
        }
    }
}

/// Model access settings. Secrets never live here, only the name of the
/// environment variable holding the key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub backend: BackendKind,
    pub endpoint: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
    pub timeout_ms: u64,
    /// Environment variable with the bearer token; empty disables auth.
    pub api_key_env: String,
    /// Dotted path to the assistant text in the response body.
    pub response_path: String,
    /// Field carrying message text in the request.
    pub message_text_key: String,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            backend: BackendKind::Mock,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model_id: "gpt-4".into(),
            temperature: 0.0,
            max_tokens: 2048,
            max_attempts: 3,
            base_backoff_ms: 500,
            timeout_ms: 120_000,
            api_key_env: "OPENAI_API_KEY".into(),
            response_path: "choices.0.message.content".into(),
            message_text_key: "content".into(),
        }
    }
}

impl LlmConfig {
    pub fn mock() -> Self {
        LlmConfig::default()
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::Config(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.max_attempts < 1 {
            return Err(LlmError::Config("max_attempts must be >= 1".into()));
        }
        if self.max_tokens < 1 {
            return Err(LlmError::Config("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

/// Append-only message list opened by a system message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversation {
    id: String,
    messages: Vec<Message>,
}

impl Conversation {
    pub fn new(id: impl Into<String>, system: &str, user: &str) -> Self {
        Conversation {
            id: id.into(),
            messages: vec![
                Message {
                    role: Role::System,
                    text: system.to_string(),
                },
                Message {
                    role: Role::User,
                    text: user.to_string(),
                },
            ],
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn push_user(&mut self, text: &str) {
        self.messages.push(Message {
            role: Role::User,
            text: text.to_string(),
        });
    }

    fn push_assistant(&mut self, text: &str) {
        self.messages.push(Message {
            role: Role::Assistant,
            text: text.to_string(),
        });
    }

    pub fn last_user_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.text.as_str())
    }
}

/// One request/response attempt sequence against a backend.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &[Message], config: &LlmConfig) -> Result<String, LlmError>;
}

/// Bookkeeping for one `chat` call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallRecord {
    pub conversation_id: String,
    pub attempts: u32,
    pub ok: bool,
}

/// Provider-agnostic chat entry point with retry and exponential backoff.
pub struct LlmGateway {
    config: LlmConfig,
    backend: Box<dyn ChatBackend>,
    calls: Mutex<Vec<CallRecord>>,
    completions: AtomicUsize,
}

impl LlmGateway {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let backend: Box<dyn ChatBackend> = match config.backend {
            BackendKind::Mock => Box::new(MockBackend),
            BackendKind::Http => Box::new(HttpBackend::new(&config)?),
        };
        Ok(Self::with_backend(config, backend))
    }

    pub fn mock() -> Self {
        Self::with_backend(LlmConfig::mock(), Box::new(MockBackend))
    }

    pub fn with_backend(config: LlmConfig, backend: Box<dyn ChatBackend>) -> Self {
        LlmGateway {
            config,
            backend,
            calls: Mutex::new(Vec::new()),
            completions: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    /// Number of successful completions so far.
    pub fn completions(&self) -> usize {
        self.completions.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().expect("call log poisoned").clone()
    }

    /// Sends the conversation and appends the assistant reply to it.
    /// Transport failures are retried up to `max_attempts` in total; other
    /// errors fail at once. The conversation is untouched on failure.
    pub fn chat(&self, conversation: &mut Conversation) -> Result<String, LlmError> {
        let mut attempts = 0;
        let result = loop {
            attempts += 1;
            match self.backend.complete(conversation.messages(), &self.config) {
                Ok(text) => break Ok(text),
                Err(e) if e.is_transient() && attempts < self.config.max_attempts => {
                    let backoff = self
                        .config
                        .base_backoff_ms
                        .saturating_mul(1u64 << (attempts - 1).min(16));
                    std::thread::sleep(Duration::from_millis(backoff));
                }
                Err(e) => break Err(e),
            }
        };
        self.calls.lock().expect("call log poisoned").push(CallRecord {
            conversation_id: conversation.id().to_string(),
            attempts,
            ok: result.is_ok(),
        });
        let text = result?;
        self.completions.fetch_add(1, Ordering::SeqCst);
        conversation.push_assistant(&text);
        Ok(text)
    }
}

/// JSON chat-completions over HTTP.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: &LlmConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpBackend { client })
    }

    pub fn request_body(messages: &[Message], config: &LlmConfig) -> Value {
        let msgs: Vec<Value> = messages
            .iter()
            .map(|m| {
                let mut o = serde_json::Map::new();
                o.insert("role".into(), json!(m.role.as_str()));
                o.insert(config.message_text_key.clone(), json!(m.text));
                Value::Object(o)
            })
            .collect();
        json!({
            "model": config.model_id,
            "messages": msgs,
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
        })
    }
}

/// Follows a dotted path such as `choices.0.message.content`.
pub fn extract_text(body: &Value, path: &str) -> Result<String, LlmError> {
    let mut cur = body;
    for seg in path.split('.').filter(|s| !s.is_empty()) {
        cur = match seg.parse::<usize>() {
            Ok(i) => cur.get(i),
            Err(_) => cur.get(seg),
        }
        .ok_or_else(|| LlmError::BadResponse(format!("response has nothing at {path:?}")))?;
    }
    cur.as_str()
        .map(str::to_string)
        .ok_or_else(|| LlmError::BadResponse(format!("value at {path:?} is not text")))
}

impl ChatBackend for HttpBackend {
    fn complete(&self, messages: &[Message], config: &LlmConfig) -> Result<String, LlmError> {
        let mut req = self
            .client
            .post(&config.endpoint)
            .json(&Self::request_body(messages, config));
        if !config.api_key_env.is_empty() {
            let key = std::env::var(&config.api_key_env).map_err(|_| {
                LlmError::Auth(format!("environment variable {} is not set", config.api_key_env))
            })?;
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(LlmError::Auth(format!("server answered {status}")));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(LlmError::Transport(format!("server answered {status}")));
        }
        if !status.is_success() {
            return Err(LlmError::BadResponse(format!("server answered {status}")));
        }
        let body: Value = resp
            .json()
            .map_err(|e| LlmError::BadResponse(format!("response is not JSON: {e}")))?;
        extract_text(&body, &config.response_path)
    }
}

/// Offline stand-in for a model. Answers search prompts with
/// [`mock_policy`] and node-augmentation prompts with a keyword heuristic.
pub struct MockBackend;

impl ChatBackend for MockBackend {
    fn complete(&self, messages: &[Message], _config: &LlmConfig) -> Result<String, LlmError> {
        let user_texts = messages.iter().rev().filter(|m| m.role == Role::User);
        for m in user_texts {
            if m.text.contains(PROPOSE_MARKER) {
                return mock_policy(&m.text);
            }
            if let Some(reply) = augment::mock_reply(&m.text) {
                return Ok(reply);
            }
        }
        Err(LlmError::MockParse("no user message carries a #PROPOSE marker".into()))
    }
}

/// Deterministic proposal policy over the prompt's marker lines.
///
/// Without history: `n` seeded-random canonicals, distinct when the space
/// allows. With history: hill-climb from the best listed architecture. The
/// k-th mutation moves slot `k mod S` (slots in canonical order) forward by
/// `1 + k / S` candidate positions, one more if that lands on the current
/// value. Mutations already listed in the history are skipped, so repeated
/// iterations walk further along the neighbourhood instead of re-proposing
/// evaluated points.
pub fn mock_policy(prompt: &str) -> Result<String, LlmError> {
    let m = parse_markers(prompt).map_err(|e| LlmError::MockParse(e.to_string()))?;
    let space = &m.space;
    let lines: Vec<String> = if m.history.is_empty() {
        random_distinct(space, m.n, mix_seed(m.seed, m.iteration as u64))
            .iter()
            .map(ArchitectureDescriptor::canonical)
            .collect()
    } else {
        let (best, _) = m
            .history
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
            .expect("history is non-empty");
        let best = decode(space, best).map_err(|e| LlmError::MockParse(e.to_string()))?;
        let known: HashSet<&str> = m.history.iter().map(|(c, _)| c.as_str()).collect();
        hill_climb_proposals(space, &best, m.n, &known)
    };
    Ok(format!("```\n{}\n```", lines.join("\n")))
}

/// Mutation sequence around `best`; see [`mock_policy`].
pub fn mutation_sequence(space: &SearchSpaceDef, best: &ArchitectureDescriptor) -> Vec<ArchitectureDescriptor> {
    let slots: Vec<_> = space.canonical_slots().collect();
    let width = slots.len();
    let max_c = slots.iter().map(|s| s.candidates.len()).max().unwrap_or(1);
    let steps = width * max_c.saturating_sub(1).max(1);
    (0..steps)
        .map(|k| {
            let slot = slots[k % width];
            let c = slot.candidates.len();
            let offset = 1 + k / width;
            let cur = slot.index_of(&best.assignments[&slot.slot_id]).expect("best is valid");
            let mut next = (cur + offset) % c;
            if next == cur {
                next = (cur + offset + 1) % c;
            }
            let mut d = best.clone();
            d.assignments.insert(slot.slot_id.clone(), slot.candidates[next].clone());
            d
        })
        .collect()
}

fn hill_climb_proposals(
    space: &SearchSpaceDef,
    best: &ArchitectureDescriptor,
    n: usize,
    known: &HashSet<&str>,
) -> Vec<String> {
    let sequence = mutation_sequence(space, best);
    let best_c = best.canonical();
    let mut emitted = Vec::new();
    let mut seen = HashSet::new();
    for d in &sequence {
        let c = d.canonical();
        if c == best_c || known.contains(c.as_str()) || !seen.insert(c.clone()) {
            continue;
        }
        emitted.push(c);
        if emitted.len() == n {
            break;
        }
    }
    if emitted.is_empty() {
        // Neighbourhood exhausted: repeat the plain sequence.
        emitted = sequence.iter().take(n).map(ArchitectureDescriptor::canonical).collect();
    }
    emitted
}

fn random_distinct(space: &SearchSpaceDef, n: usize, seed: u64) -> Vec<ArchitectureDescriptor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        let d = space.sample(&mut rng);
        attempts += 1;
        if seen.insert(d.canonical()) || attempts > 64 * n + 256 {
            out.push(d);
        }
    }
    out
}
