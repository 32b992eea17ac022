use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatMessage, PlannerError, Role};
use crate::util::sha256_hex;

/// Produces one raw completion for a message sequence.
pub trait PlannerBackend: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, PlannerError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    /// OpenAI-style `POST {endpoint}` with `{model, messages, temperature}`.
    HttpChat {
        endpoint: String,
        model: String,
        /// Name of the environment variable holding the bearer token.
        #[serde(default)]
        auth_token_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
    /// Canned responses from a fixture file.
    Scripted { fixture: PathBuf },
}

fn default_timeout() -> f64 {
    120.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub backend: BackendKind,
    #[serde(default)]
    pub temperature: f64,
    /// Extra attempts after a transport failure.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_retries() -> u32 {
    2
}

impl PlannerConfig {
    pub fn scripted(fixture: impl Into<PathBuf>) -> Self {
        PlannerConfig { backend: BackendKind::Scripted { fixture: fixture.into() }, temperature: 0.0, max_retries: 0 }
    }

    pub fn http_chat(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        PlannerConfig {
            backend: BackendKind::HttpChat {
                endpoint: endpoint.into(),
                model: model.into(),
                auth_token_env: None,
                timeout_secs: default_timeout(),
            },
            temperature: 0.0,
            max_retries: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(PlannerError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        Ok(())
    }

    pub fn build_backend(&self) -> Result<Box<dyn PlannerBackend>, PlannerError> {
        self.validate()?;
        Ok(match &self.backend {
            BackendKind::Scripted { fixture } => Box::new(ScriptedBackend::from_fixture_file(fixture)?),
            BackendKind::HttpChat { .. } => Box::new(HttpChatBackend::new(self.clone())),
        })
    }
}

/// Fixture file for [`ScriptedBackend`].
///
/// ```json
/// {
///   "entries": [
///     {"user": "I want to generate ...", "responses": ["{\"plan\": \"...\"}"]},
///     {"user_sha256": "3f1c...", "responses": ["...", "..."]}
///   ],
///   "default": "optional fallback completion"
/// }
/// ```
///
/// Entries are keyed by the SHA-256 of the last user message. Repeated
/// requests walk through `responses` and then keep returning the last one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedFixture {
    #[serde(default)]
    pub entries: Vec<ScriptedEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_sha256: Option<String>,
    pub responses: Vec<String>,
}

/// Deterministic backend for tests and offline demos.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    responses: HashMap<String, Vec<String>>,
    cursors: Mutex<HashMap<String, usize>>,
    default: Option<String>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn key(user_message: &str) -> String {
        sha256_hex(user_message.as_bytes())
    }

    /// Adds a response for `user_message`; repeated calls queue more.
    pub fn register(mut self, user_message: &str, response: impl Into<String>) -> Self {
        self.responses.entry(Self::key(user_message)).or_default().push(response.into());
        self
    }

    pub fn with_default(mut self, response: impl Into<String>) -> Self {
        self.default = Some(response.into());
        self
    }

    pub fn from_fixture(fixture: ScriptedFixture) -> Result<Self, PlannerError> {
        let mut backend = ScriptedBackend { default: fixture.default, ..Default::default() };
        for (i, entry) in fixture.entries.into_iter().enumerate() {
            let key = match (&entry.user, &entry.user_sha256) {
                (Some(text), _) => Self::key(text),
                (None, Some(hash)) => hash.to_ascii_lowercase(),
                (None, None) => {
                    return Err(PlannerError::Config(format!("fixture entry {i} has neither `user` nor `user_sha256`")))
                }
            };
            backend.responses.entry(key).or_default().extend(entry.responses);
        }
        Ok(backend)
    }

    pub fn from_fixture_file(path: &Path) -> Result<Self, PlannerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PlannerError::Config(format!("reading fixture {}: {e}", path.display())))?;
        let fixture: ScriptedFixture = serde_json::from_str(&text)
            .map_err(|e| PlannerError::Config(format!("parsing fixture {}: {e}", path.display())))?;
        Self::from_fixture(fixture)
    }
}

impl PlannerBackend for ScriptedBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, PlannerError> {
        let last_user = messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .ok_or(PlannerError::NoResponse)?;
        let key = Self::key(&last_user.content);
        match self.responses.get(&key) {
            Some(list) if !list.is_empty() => {
                let mut cursors = self.cursors.lock().expect("cursor lock poisoned");
                let cursor = cursors.entry(key).or_insert(0);
                let response = list[(*cursor).min(list.len() - 1)].clone();
                *cursor += 1;
                Ok(response)
            }
            _ => self.default.clone().ok_or(PlannerError::NoResponse),
        }
    }
}

#[derive(Serialize)]
struct ChatRequestBody<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

/// Chat-completions client.
pub struct HttpChatBackend {
    config: PlannerConfig,
    http: ureq::Agent,
}

impl HttpChatBackend {
    pub fn new(config: PlannerConfig) -> Self {
        let timeout = match &config.backend {
            BackendKind::HttpChat { timeout_secs, .. } => *timeout_secs,
            BackendKind::Scripted { .. } => default_timeout(),
        };
        let http = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(timeout.max(0.001))))
            .build()
            .into();
        HttpChatBackend { config, http }
    }

    fn attempt(&self, endpoint: &str, model: &str, token: Option<&str>, messages: &[ChatMessage]) -> Result<String, String> {
        let body = ChatRequestBody { model, messages, temperature: self.config.temperature };
        let mut request = self.http.post(endpoint);
        if let Some(token) = token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(&body).map_err(|e| e.to_string())?;
        let value: serde_json::Value = response.body_mut().read_json().map_err(|e| e.to_string())?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| "response has no choices[0].message.content".to_string())
    }
}

impl PlannerBackend for HttpChatBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, PlannerError> {
        let BackendKind::HttpChat { endpoint, model, auth_token_env, .. } = &self.config.backend else {
            return Err(PlannerError::Config("HttpChatBackend needs an http_chat backend config".into()));
        };
        let token = match auth_token_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| PlannerError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(100 << attempt.min(5)));
            }
            match self.attempt(endpoint, model, token.as_deref(), messages) {
                Ok(content) => return Ok(content),
                Err(e) => {
                    log::warn!("planner request attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(PlannerError::BackendError { attempts, message: last })
    }
}
