//! Multi-turn sessions: each turn plans from the whole conversation so far,
//! renders the plan, and persists everything under a [`SessionStore`].

mod engine;
pub mod http;
pub mod store;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mixer::{Limiter, MixConfig};
use crate::plan::{Plan, ValidationReport};
use crate::planner::{ConversationTurn, PlannerError, TemplateVariant};
use crate::wav::WavFormat;

pub use engine::{Engine, TurnOptions};
pub use store::{valid_session_id, SessionStore, TurnArtifacts};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("turn {0} has no rendered audio")]
    NotRendered(usize),
    #[error("session `{0}` already exists")]
    AlreadyExists(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("session store: {0}")]
    Store(String),
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

impl SessionError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        SessionError::Store(format!("{}: {e}", path.display()))
    }

    /// Stable machine-readable name, used as the HTTP problem code.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::NotFound(_) => "NotFound",
            SessionError::NotRendered(_) => "NotRendered",
            SessionError::AlreadyExists(_) | SessionError::Store(_) => "StoreError",
            SessionError::InvalidRequest(_) => "InvalidRequest",
            SessionError::Planner(PlannerError::BackendError { .. }) => "BackendError",
            SessionError::Planner(PlannerError::NoResponse) => "NoResponse",
            SessionError::Planner(PlannerError::PlanRejected { .. }) => "PlanRejected",
            SessionError::Planner(PlannerError::InvalidHistory(_)) => "InvalidHistory",
            SessionError::Planner(PlannerError::Config(_)) => "ConfigError",
        }
    }
}

/// Settings chosen when a session is created; fixed afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Timeline length in seconds.
    pub total_duration: f64,
    pub template_variant: TemplateVariant,
    pub sample_rate: u32,
    pub limiter: Limiter,
    /// Edge fade per clip, seconds.
    pub crossfade: f64,
    /// Limiter ceiling, dBFS.
    pub peak_ceiling: f64,
    pub wav_format: WavFormat,
}

impl Default for SessionConfig {
    fn default() -> Self {
        let mix = MixConfig::default();
        SessionConfig {
            total_duration: mix.total_duration,
            template_variant: TemplateVariant::Standard,
            sample_rate: mix.sample_rate,
            limiter: mix.limiter,
            crossfade: mix.crossfade,
            peak_ceiling: mix.peak_ceiling,
            wav_format: WavFormat::Pcm16,
        }
    }
}

impl SessionConfig {
    pub fn mix_config(&self) -> MixConfig {
        MixConfig {
            total_duration: self.total_duration,
            sample_rate: self.sample_rate,
            crossfade: self.crossfade,
            peak_ceiling: self.peak_ceiling,
            limiter: self.limiter,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        self.mix_config().validate().map_err(|e| SessionError::InvalidRequest(e.to_string()))
    }
}

/// What `session.json` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSettings {
    pub id: String,
    /// Unix seconds.
    pub created_at: u64,
    /// Describes the planner backend the session was created with.
    pub planner: String,
    #[serde(flatten)]
    pub config: SessionConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnStatus {
    Ok,
    PlanRejected,
    AgentFailed,
}

/// What `turn.json` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub index: usize,
    pub user_message: String,
    pub status: TurnStatus,
    /// Planner requests used (1, or 2 after a corrective retry).
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    /// Per-step generation seeds; empty when nothing was generated.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_override: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Unix seconds.
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub record: TurnRecord,
    pub raw_planner_response: String,
    pub plan: Option<Plan>,
    /// Present exactly when the turn rendered.
    pub audio_path: Option<PathBuf>,
}

impl Turn {
    pub fn index(&self) -> usize {
        self.record.index
    }

    pub fn status(&self) -> TurnStatus {
        self.record.status
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub settings: SessionSettings,
    pub turns: Vec<Turn>,
}

impl Session {
    pub fn id(&self) -> &str {
        &self.settings.id
    }

    pub fn total_duration(&self) -> f64 {
        self.settings.config.total_duration
    }

    /// Every prior user message and raw planner response, in order.
    pub fn history(&self) -> Vec<ConversationTurn> {
        let mut out = Vec::with_capacity(self.turns.len() * 2);
        for t in &self.turns {
            out.push(ConversationTurn {
                role: crate::planner::Role::User,
                content: t.record.user_message.clone(),
                timestamp: t.record.created_at,
            });
            out.push(ConversationTurn {
                role: crate::planner::Role::Assistant,
                content: t.raw_planner_response.clone(),
                timestamp: t.record.created_at,
            });
        }
        out
    }
}
