//! Record invariants.
//!
//! [`validate_record`] checks what a record can say about itself. [`validate_in_context`]
//! adds the checks that need other records: references, turn counts of the annotated
//! dialogue, and the review gates (downstream records only hang off accepted parents).

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use super::record::Record;
use super::types::*;
use crate::pipeline::JobState;
use crate::review::{ReviewKind, VerdictPayload};

/// Upper bound on the summarized norm action, in whitespace-separated words.
pub const MAX_NORM_ACTION_WORDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Invariant,
    DanglingReference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_dangling_reference(&self) -> bool {
        self.violations.iter().any(|v| v.kind == ViolationKind::DanglingReference)
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle) || v.field == needle)
    }

    fn invariant(&mut self, field: &'static str, message: impl Into<String>) {
        self.violations.push(Violation {
            kind: ViolationKind::Invariant,
            field,
            message: message.into(),
        });
    }

    fn dangling(&mut self, field: &'static str, kind: RecordKind, id: &RecordId) {
        self.violations.push(Violation {
            kind: ViolationKind::DanglingReference,
            field,
            message: format!("{kind} {id} does not exist"),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("unknown record kind {0:?}")]
    UnknownKind(String),
    #[error("record is missing the \"kind\" field")]
    MissingKind,
    #[error("malformed {kind} record: {source}")]
    Malformed {
        kind: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Read access to the latest version of other records.
pub trait Lookup {
    fn find(&self, kind: RecordKind, id: &RecordId) -> Option<&Record>;
}

/// Intrinsic invariants of a single record. Pure.
pub fn validate_record(record: &Record) -> ValidationReport {
    let mut report = ValidationReport::default();
    match record {
        Record::Norm(n) => {
            if n.description.trim().is_empty() {
                report.invariant("description", "description must be non-empty");
            }
            if n.verbal_evidence.iter().any(|p| p.trim().is_empty()) {
                report.invariant("verbal_evidence", "verbal evidence phrases must be non-empty");
            }
            if n.origin == NormOrigin::Transferred && n.source_norm_id.is_none() {
                report.invariant("source_norm_id", "transferred norm must record its source norm");
            }
            if n.origin == NormOrigin::Transferred && n.culture != Culture::American {
                report.invariant("culture", "transferred norms are american");
            }
            let seed = n.origin == NormOrigin::ExpertSeed;
            check_status(&mut report, &n.status, seed);
        }
        Record::Scenario(s) => {
            if s.setting.trim().is_empty() {
                report.invariant("setting", "setting must be non-empty");
            }
            if s.participants.trim().is_empty() {
                report.invariant("participants", "participants must be non-empty");
            }
        }
        Record::Situation(s) => {
            if s.text.trim().is_empty() {
                report.invariant("text", "situation text must be non-empty");
            }
            check_status(&mut report, &s.status, false);
        }
        Record::Dialogue(d) => {
            if d.turns.len() < 2 {
                report.invariant("turns", format!("dialogue needs ≥2 turns, has {}", d.turns.len()));
            }
            let speakers: BTreeSet<&str> = d.turns.iter().map(|t| t.speaker.trim()).collect();
            if speakers.len() < 2 {
                report.invariant(
                    "turns",
                    format!("dialogue needs ≥2 distinct speakers, has {}", speakers.len()),
                );
            }
            for (i, t) in d.turns.iter().enumerate() {
                if t.index != i {
                    report.invariant("turns", format!("turn {i} has index {}", t.index));
                }
                if t.speaker.trim().is_empty() {
                    report.invariant("turns", format!("turn {i} has an empty speaker"));
                }
                if t.utterance.trim().is_empty() {
                    report.invariant("turns", format!("turn {i} has an empty utterance"));
                }
            }
            check_status(&mut report, &d.status, false);
        }
        Record::Annotation(a) => {
            let words = a.norm_action.split_whitespace().count();
            if words == 0 {
                report.invariant("norm_action", "norm action must be non-empty");
            } else if words > MAX_NORM_ACTION_WORDS {
                report.invariant(
                    "norm_action",
                    format!("norm action has {words} words, limit {MAX_NORM_ACTION_WORDS}"),
                );
            }
            for (i, l) in a.labels.iter().enumerate() {
                if l.turn_index != i {
                    report.invariant("labels", format!("label {i} has turn_index {}", l.turn_index));
                }
                if a.source == AnnotationSource::Model && l.explanation.trim().is_empty() {
                    report.invariant("labels", format!("model label {i} has no explanation"));
                }
            }
            if a.norm_actors.iter().any(|n| n.trim().is_empty()) {
                report.invariant("norm_actors", "norm actor names must be non-empty");
            }
            check_status(&mut report, &a.status, false);
        }
        Record::ReviewTask(t) => {
            if t.required_verdicts == 0 {
                report.invariant("required_verdicts", "required_verdicts must be ≥1");
            }
        }
        Record::Verdict(v) => {
            if v.annotator_id.trim().is_empty() {
                report.invariant("annotator_id", "annotator id must be non-empty");
            }
            for e in v.payload.schema_errors() {
                report.invariant("payload", e);
            }
        }
        Record::Aggregate(_) => {}
        Record::Job(j) => {
            if matches!(j.state, JobState::Failed | JobState::Quarantined)
                && j.error.as_deref().is_none_or(|e| e.trim().is_empty())
            {
                report.invariant("error", "failed or quarantined job must carry error text");
            }
        }
    }
    report
}

fn check_status(report: &mut ValidationReport, status: &LifecycleStatus, expert_seed: bool) {
    if status.state.is_decided() && status.decided_by.is_none() && !expert_seed {
        report.invariant("status", "accepted/rejected records require a review aggregate");
    }
}

/// Intrinsic plus relational invariants against the records visible through `lookup`.
pub fn validate_in_context(record: &Record, lookup: &dyn Lookup) -> ValidationReport {
    let mut report = validate_record(record);
    let status_ref = record.status().and_then(|s| s.decided_by.as_ref());
    if let Some(agg) = status_ref {
        if lookup.find(RecordKind::Aggregate, agg).is_none() {
            report.dangling("status.decided_by", RecordKind::Aggregate, agg);
        }
    }
    match record {
        Record::Norm(n) => {
            if let Some(src) = &n.source_norm_id {
                match lookup.find(RecordKind::Norm, src) {
                    Some(Record::Norm(s)) => {
                        if s.culture == n.culture {
                            report.invariant("source_norm_id", "source norm must be of the other culture");
                        }
                    }
                    _ => report.dangling("source_norm_id", RecordKind::Norm, src),
                }
            }
        }
        Record::Scenario(s) => {
            require_accepted_norm(&mut report, lookup, &s.norm_id);
        }
        Record::Situation(s) => {
            require_accepted_norm(&mut report, lookup, &s.norm_id);
            match lookup.find(RecordKind::Scenario, &s.scenario_id) {
                Some(Record::Scenario(sc)) => {
                    if sc.norm_id != s.norm_id {
                        report.invariant("scenario_id", "scenario belongs to a different norm");
                    }
                    if s.text.chars().count() <= sc.raw_line.chars().count() {
                        report.invariant(
                            "text",
                            "elaborated situation must be longer than its scenario line",
                        );
                    }
                }
                _ => report.dangling("scenario_id", RecordKind::Scenario, &s.scenario_id),
            }
        }
        Record::Dialogue(d) => {
            if lookup.find(RecordKind::Norm, &d.norm_id).is_none() {
                report.dangling("norm_id", RecordKind::Norm, &d.norm_id);
            }
            match lookup.find(RecordKind::Situation, &d.situation_id) {
                Some(Record::Situation(s)) => {
                    if s.norm_id != d.norm_id {
                        report.invariant("situation_id", "situation belongs to a different norm");
                    }
                    if !s.status.is_accepted() {
                        report.invariant("situation_id", "dialogue requires an accepted situation");
                    }
                }
                _ => report.dangling("situation_id", RecordKind::Situation, &d.situation_id),
            }
        }
        Record::Annotation(a) => match lookup.find(RecordKind::Dialogue, &a.dialogue_id) {
            Some(Record::Dialogue(d)) => {
                if !d.status.is_accepted() {
                    report.invariant("dialogue_id", "annotation requires an accepted dialogue");
                }
                if a.labels.len() != d.turns.len() {
                    report.invariant(
                        "labels",
                        format!(
                            "label count {} does not match dialogue turn count {}",
                            a.labels.len(),
                            d.turns.len()
                        ),
                    );
                }
                let speakers = d.speakers();
                for actor in &a.norm_actors {
                    if !speakers.contains(&actor.trim()) {
                        report.invariant("norm_actors", format!("{actor} is not a dialogue speaker"));
                    }
                }
            }
            _ => report.dangling("dialogue_id", RecordKind::Dialogue, &a.dialogue_id),
        },
        Record::ReviewTask(t) => {
            let kind = match t.kind {
                ReviewKind::NormVerification => RecordKind::Norm,
                ReviewKind::SituationFaithfulness => RecordKind::Situation,
                ReviewKind::DialogueQuality => RecordKind::Dialogue,
                ReviewKind::LabelVerification => RecordKind::Annotation,
            };
            if lookup.find(kind, &t.item_id).is_none() {
                report.dangling("item_id", kind, &t.item_id);
            }
        }
        Record::Verdict(v) => match lookup.find(RecordKind::ReviewTask, &v.task_id) {
            Some(Record::ReviewTask(t)) => {
                if t.kind != v.payload.kind() {
                    report.invariant("payload", format!("payload does not match {} task", t.kind));
                }
                if let (VerdictPayload::LabelVerification(l), Some(Record::Annotation(a))) =
                    (&v.payload, lookup.find(RecordKind::Annotation, &t.item_id))
                {
                    if l.turns.len() != a.labels.len() {
                        report.invariant(
                            "payload",
                            format!("{} turn checks for {} labels", l.turns.len(), a.labels.len()),
                        );
                    }
                }
            }
            _ => report.dangling("task_id", RecordKind::ReviewTask, &v.task_id),
        },
        Record::Aggregate(a) => {
            if lookup.find(RecordKind::ReviewTask, &a.task_id).is_none() {
                report.dangling("task_id", RecordKind::ReviewTask, &a.task_id);
            }
        }
        Record::Job(j) => {
            if j.state == JobState::Done {
                for out in &j.output_ids {
                    let found = [
                        RecordKind::Norm,
                        RecordKind::Scenario,
                        RecordKind::Situation,
                        RecordKind::Dialogue,
                        RecordKind::Annotation,
                    ]
                    .into_iter()
                    .any(|k| lookup.find(k, out).is_some());
                    if !found {
                        report.violations.push(Violation {
                            kind: ViolationKind::DanglingReference,
                            field: "output_ids",
                            message: format!("output {out} does not exist"),
                        });
                    }
                }
            }
        }
    }
    report
}

fn require_accepted_norm(report: &mut ValidationReport, lookup: &dyn Lookup, norm_id: &RecordId) {
    match lookup.find(RecordKind::Norm, norm_id) {
        Some(Record::Norm(n)) => {
            if !n.status.is_accepted() {
                report.invariant("norm_id", "downstream records require an accepted norm");
            }
        }
        _ => report.dangling("norm_id", RecordKind::Norm, norm_id),
    }
}

/// Validates a raw JSON line as a record. Unknown kinds are an error, not a report entry.
pub fn validate_json(
    value: &serde_json::Value,
    lookup: Option<&dyn Lookup>,
) -> Result<ValidationReport, ValidationError> {
    let kind = value
        .get("kind")
        .and_then(|k| k.as_str())
        .ok_or(ValidationError::MissingKind)?;
    if RecordKind::parse(kind).is_none() {
        return Err(ValidationError::UnknownKind(kind.to_owned()));
    }
    let mut value = value.clone();
    if let Some(obj) = value.as_object_mut() {
        obj.remove("version");
    }
    let record: Record = serde_json::from_value(value).map_err(|source| ValidationError::Malformed {
        kind: kind.to_owned(),
        source,
    })?;
    Ok(match lookup {
        Some(l) => validate_in_context(&record, l),
        None => validate_record(&record),
    })
}
