//! Prompt assembly and plan requests against a chat-completion backend.

mod backend;
mod template;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{parse_plan_response, validate_plan, ParseError, Plan, ValidationReport};

pub use backend::{
    BackendKind, HttpChatBackend, PlannerBackend, PlannerConfig, ScriptedBackend, ScriptedEntry, ScriptedFixture,
};
pub use template::{ExamplePair, PromptTemplate, TemplateVariant};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("planner backend failed after {attempts} attempt(s): {message}")]
    BackendError { attempts: u32, message: String },
    #[error("planner backend has no response for this request")]
    NoResponse,
    #[error("conversation history must alternate user/assistant starting with user (turn {0})")]
    InvalidHistory(usize),
    #[error("plan still invalid after a corrective retry: {reason}")]
    PlanRejected {
        /// The last completion received.
        raw_response: String,
        /// The last plan that parsed, if any.
        plan: Option<Plan>,
        reason: String,
    },
    #[error("invalid planner configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One chat-completion message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

/// A prior message in the user's conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub role: Role,
    pub content: String,
    /// Unix seconds; not part of the prompt.
    pub timestamp: u64,
}

impl ConversationTurn {
    pub fn user(content: impl Into<String>) -> Self {
        ConversationTurn { role: Role::User, content: content.into(), timestamp: unix_now() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        ConversationTurn { role: Role::Assistant, content: content.into(), timestamp: unix_now() }
    }
}

pub(crate) fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Checks that `history` alternates user/assistant, starting with user.
pub fn check_history(history: &[ConversationTurn]) -> Result<(), PlannerError> {
    for (i, turn) in history.iter().enumerate() {
        let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
        if turn.role != expected {
            return Err(PlannerError::InvalidHistory(i));
        }
    }
    Ok(())
}

/// System instruction, in-context example pairs, prior turns, then the new
/// request. Timestamps are ignored, so equal inputs give identical output.
pub fn build_prompt(template: &PromptTemplate, history: &[ConversationTurn], user_request: &str) -> Vec<ChatMessage> {
    let mut messages = Vec::with_capacity(2 + 2 * template.in_context_examples.len() + history.len());
    messages.push(ChatMessage::system(&template.system_instruction));
    for example in &template.in_context_examples {
        messages.push(ChatMessage::user(&example.user));
        messages.push(ChatMessage::assistant(&example.assistant));
    }
    messages.extend(history.iter().map(|t| ChatMessage { role: t.role, content: t.content.clone() }));
    messages.push(ChatMessage::user(user_request));
    messages
}

/// Follow-up message sent after an invalid plan. Lists each violated rule id
/// once, in report order.
pub fn corrective_message(report: &ValidationReport) -> String {
    let mut lines = vec!["The plan you returned breaks these requirements:".to_string()];
    for rule in report.rule_ids() {
        let details: Vec<&str> =
            report.violations.iter().filter(|v| v.rule == rule).map(|v| v.message.as_str()).collect();
        lines.push(format!("- {rule}: {}", details.join("; ")));
    }
    lines.push("Please respond with a corrected plan in the same JSON format.".to_string());
    lines.join("\n")
}

fn parse_failure_message(error: &ParseError) -> String {
    format!(
        "The plan you returned could not be parsed:\n- PARSE_ERROR: {error}\nPlease respond with a corrected plan in the same JSON format."
    )
}

/// A validated plan and the completions that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub plan: Plan,
    pub report: ValidationReport,
    /// The completion the plan was parsed from.
    pub raw_response: String,
    /// 1 when the first answer was valid, 2 after a corrective retry.
    pub attempts: u32,
}

/// Planner front end over a chosen backend.
pub struct Planner {
    backend: Box<dyn PlannerBackend>,
}

impl Planner {
    pub fn new(backend: Box<dyn PlannerBackend>) -> Self {
        Planner { backend }
    }

    pub fn from_config(config: &PlannerConfig) -> Result<Self, PlannerError> {
        Ok(Planner { backend: config.build_backend()? })
    }

    pub fn backend(&self) -> &dyn PlannerBackend {
        self.backend.as_ref()
    }

    /// Raw completion for `messages`.
    pub fn request_plan(&self, messages: &[ChatMessage]) -> Result<String, PlannerError> {
        if messages.is_empty() {
            return Err(PlannerError::Config("empty message sequence".into()));
        }
        self.backend.complete(messages)
    }

    /// Prompt, request, parse and validate, with one corrective retry.
    pub fn plan_from_request(
        &self,
        template: &PromptTemplate,
        history: &[ConversationTurn],
        user_request: &str,
        total_duration: f64,
    ) -> Result<PlanOutcome, PlannerError> {
        check_history(history)?;
        let mut messages = build_prompt(template, history, user_request);
        let mut last_plan = None;
        let mut raw = String::new();
        for attempt in 1..=2u32 {
            raw = self.request_plan(&messages)?;
            let correction = match parse_plan_response(&raw, total_duration) {
                Ok(plan) => {
                    let report = validate_plan(&plan);
                    if report.valid {
                        return Ok(PlanOutcome { plan, report, raw_response: raw, attempts: attempt });
                    }
                    let message = corrective_message(&report);
                    last_plan = Some((plan, report));
                    message
                }
                Err(e) => {
                    last_plan = None;
                    parse_failure_message(&e)
                }
            };
            log::info!("planner attempt {attempt} rejected; sending correction");
            messages.push(ChatMessage::assistant(&raw));
            messages.push(ChatMessage::user(correction));
        }
        let reason = match &last_plan {
            Some((_, report)) => report.rule_ids().iter().map(|r| r.as_str()).collect::<Vec<_>>().join(", "),
            None => "response did not parse".to_string(),
        };
        Err(PlannerError::PlanRejected { raw_response: raw, plan: last_plan.map(|(p, _)| p), reason })
    }
}
