use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Plan, MAX_CONCURRENT_STEPS, VOLUME_MAX_DB, VOLUME_MIN_DB};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RuleId {
    /// No step ends exactly at the total duration.
    EndCoverage,
    /// Three or more steps sound at the same instant.
    OverlapLimit,
    /// A step does not satisfy `0 <= start_time < end_time`.
    TimeOrder,
    /// A step ends after the total duration.
    DurationBound,
    /// A volume is non-finite or outside `[-70, 0]` LUFS.
    VolumeRange,
    EmptyDescription,
    EmptyPlan,
}

impl RuleId {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuleId::EndCoverage => "END_COVERAGE",
            RuleId::OverlapLimit => "OVERLAP_LIMIT",
            RuleId::TimeOrder => "TIME_ORDER",
            RuleId::DurationBound => "DURATION_BOUND",
            RuleId::VolumeRange => "VOLUME_RANGE",
            RuleId::EmptyDescription => "EMPTY_DESCRIPTION",
            RuleId::EmptyPlan => "EMPTY_PLAN",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: RuleId,
    pub message: String,
    /// Zero-based step indices.
    pub steps: Vec<usize>,
}

/// Informational finding that never affects validity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub message: String,
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<Note>,
}

impl ValidationReport {
    pub fn rule_ids(&self) -> Vec<RuleId> {
        let mut ids: Vec<RuleId> = Vec::new();
        for v in &self.violations {
            if !ids.contains(&v.rule) {
                ids.push(v.rule);
            }
        }
        ids
    }

    pub fn has(&self, rule: RuleId) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

/// Sweep events over well-ordered intervals. Ends sort before starts at the
/// same instant, which makes the intervals half-open.
fn sweep_events(plan: &Plan) -> Vec<(f64, bool, usize)> {
    let mut events: Vec<(f64, bool, usize)> = plan
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.start_time < s.end_time)
        .flat_map(|(i, s)| [(s.start_time, true, i), (s.end_time, false, i)])
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    events
}

/// Largest number of steps whose `[start_time, end_time)` intervals share an
/// instant. Steps with `start_time >= end_time` are never active.
pub fn max_concurrency(plan: &Plan) -> usize {
    let mut active = 0usize;
    let mut best = 0usize;
    for (_, is_start, _) in sweep_events(plan) {
        if is_start {
            active += 1;
            best = best.max(active);
        } else {
            active -= 1;
        }
    }
    best
}

/// Groups of step indices that are simultaneously active while more than
/// `limit` steps sound. Each group is reported once.
fn overlap_groups(plan: &Plan, limit: usize) -> Vec<Vec<usize>> {
    let mut active: Vec<usize> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (_, is_start, idx) in sweep_events(plan) {
        if is_start {
            active.push(idx);
            if active.len() > limit {
                let mut group = active.clone();
                group.sort_unstable();
                if !groups.contains(&group) {
                    groups.push(group);
                }
            }
        } else {
            active.retain(|&i| i != idx);
        }
    }
    groups
}

/// Checks every plan rule and reports all violations.
pub fn validate_plan(plan: &Plan) -> ValidationReport {
    let mut violations = Vec::new();
    let mut notes = Vec::new();
    let total = plan.total_duration;

    if plan.steps.is_empty() {
        violations.push(Violation { rule: RuleId::EmptyPlan, message: "plan has no steps".into(), steps: vec![] });
    }

    for (i, step) in plan.steps.iter().enumerate() {
        if step.description.trim().is_empty() {
            violations.push(Violation {
                rule: RuleId::EmptyDescription,
                message: format!("step {} has an empty description", i + 1),
                steps: vec![i],
            });
        }
        let ordered = step.start_time.is_finite()
            && step.end_time.is_finite()
            && step.start_time >= 0.0
            && step.start_time < step.end_time;
        if !ordered {
            violations.push(Violation {
                rule: RuleId::TimeOrder,
                message: format!(
                    "step {} needs 0 <= start_time < end_time, got [{}, {})",
                    i + 1,
                    step.start_time,
                    step.end_time
                ),
                steps: vec![i],
            });
        }
        if step.end_time > total {
            violations.push(Violation {
                rule: RuleId::DurationBound,
                message: format!("step {} ends at {} after the total duration {}", i + 1, step.end_time, total),
                steps: vec![i],
            });
        }
        if let Some(v) = step.volume {
            if !(v.is_finite() && (VOLUME_MIN_DB..=VOLUME_MAX_DB).contains(&v)) {
                violations.push(Violation {
                    rule: RuleId::VolumeRange,
                    message: format!("step {} volume {} dB is outside [{}, {}]", i + 1, v, VOLUME_MIN_DB, VOLUME_MAX_DB),
                    steps: vec![i],
                });
            }
        }
    }

    if !plan.steps.is_empty() && !plan.steps.iter().any(|s| s.end_time == total) {
        violations.push(Violation {
            rule: RuleId::EndCoverage,
            message: format!("no step has end_time = {total}"),
            steps: vec![],
        });
    }

    for group in overlap_groups(plan, MAX_CONCURRENT_STEPS) {
        violations.push(Violation {
            rule: RuleId::OverlapLimit,
            message: format!(
                "{} steps sound at the same time (at most {} allowed): steps {}",
                group.len(),
                MAX_CONCURRENT_STEPS,
                group.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(", ")
            ),
            steps: group,
        });
    }

    for (i, a) in plan.steps.iter().enumerate() {
        for (j, b) in plan.steps.iter().enumerate().skip(i + 1) {
            let adjacent = a.end_time == b.start_time || b.end_time == a.start_time;
            if adjacent && a.description.trim() == b.description.trim() {
                notes.push(Note {
                    message: format!("steps {} and {} repeat the same description back to back; one call may do", i + 1, j + 1),
                    steps: vec![i, j],
                });
            }
        }
    }

    ValidationReport { valid: violations.is_empty(), violations, notes }
}
