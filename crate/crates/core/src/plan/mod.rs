//! Timed, volume-annotated generation plans.
//!
//! A plan is a list of atomic generation calls placed on a shared timeline.
//! Planners emit it inside a JSON envelope:
//!
//! ```text
//! {"plan": "1. Auffusion.generate('Rain pouring outside.',start_time=0,end_time=10); 2. ..."}
//! ```
//!
//! See [`parse_plan_response`] for the accepted grammar, [`validate_plan`] for
//! the timeline rules and [`serialize_plan`] for the canonical form.

mod parse;
mod validate;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{extract_envelope, parse_plan_response, parse_plan_text};
pub use validate::{max_concurrency, validate_plan, Note, RuleId, ValidationReport, Violation};

/// Loudest and quietest accepted per-step volume, in LUFS.
pub const VOLUME_MIN_DB: f64 = -70.0;
pub const VOLUME_MAX_DB: f64 = 0.0;
/// At most this many steps may sound at the same instant.
pub const MAX_CONCURRENT_STEPS: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("no plan envelope found in planner response")]
    NoEnvelope,
    #[error("plan envelope is not valid JSON: {0}")]
    InvalidJson(String),
    #[error("plan envelope has no string field `plan`")]
    MissingPlanField,
    #[error("plan contains no generation calls")]
    EmptyPlan,
    #[error("malformed call at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("call {call} is missing required argument `{name}`")]
    MissingArgument { call: usize, name: &'static str },
    #[error("call {call}: argument `{name}` is not a number: `{value}`")]
    NonNumeric { call: usize, name: String, value: String },
}

/// One atomic generation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub description: String,
    pub start_time: f64,
    pub end_time: f64,
    /// Loudness target in LUFS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<f64>,
}

impl PlanStep {
    pub fn new(description: impl Into<String>, start_time: f64, end_time: f64) -> Self {
        PlanStep { description: description.into(), start_time, end_time, volume: None }
    }

    pub fn with_volume(mut self, volume: f64) -> Self {
        self.volume = Some(volume);
        self
    }

    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }

    /// Half-open interval overlap test.
    pub fn overlaps(&self, other: &PlanStep) -> bool {
        self.start_time < other.end_time && other.start_time < self.end_time
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    pub total_duration: f64,
}

impl Plan {
    pub fn new(steps: Vec<PlanStep>, total_duration: f64) -> Self {
        Plan { steps, total_duration }
    }

    pub fn has_volumes(&self) -> bool {
        self.steps.iter().any(|s| s.volume.is_some())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Plan, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Plan> {
        let text = std::fs::read_to_string(path)?;
        Plan::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

fn write_number(out: &mut String, x: f64) {
    // `Display` for f64 is the shortest representation that round-trips.
    use std::fmt::Write;
    write!(out, "{x}").expect("writing to a String");
}

fn write_quoted(out: &mut String, text: &str) {
    out.push('\'');
    for ch in text.chars() {
        if ch == '\'' || ch == '\\' {
            out.push('\\');
        }
        out.push(ch);
    }
    out.push('\'');
}

/// The plan string inside the envelope, e.g.
/// `1. Auffusion.generate('A man speaking.',start_time=3,end_time=6)`.
pub fn plan_text(plan: &Plan) -> String {
    let mut out = String::new();
    for (i, step) in plan.steps.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        out.push_str(&format!("{}. Auffusion.generate(", i + 1));
        write_quoted(&mut out, &step.description);
        out.push_str(",start_time=");
        write_number(&mut out, step.start_time);
        out.push_str(",end_time=");
        write_number(&mut out, step.end_time);
        if let Some(v) = step.volume {
            out.push_str(",volume=");
            write_number(&mut out, v);
        }
        out.push(')');
    }
    out
}

/// Emits the planner envelope `{"plan": "..."}` that [`parse_plan_response`]
/// accepts.
pub fn serialize_plan(plan: &Plan) -> String {
    serde_json::json!({ "plan": plan_text(plan) }).to_string()
}
