use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{ObservanceLabel, RecordId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewKind {
    NormVerification,
    SituationFaithfulness,
    DialogueQuality,
    LabelVerification,
}

impl ReviewKind {
    pub const ALL: [ReviewKind; 4] = [
        ReviewKind::NormVerification,
        ReviewKind::SituationFaithfulness,
        ReviewKind::DialogueQuality,
        ReviewKind::LabelVerification,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReviewKind::NormVerification => "norm_verification",
            ReviewKind::SituationFaithfulness => "situation_faithfulness",
            ReviewKind::DialogueQuality => "dialogue_quality",
            ReviewKind::LabelVerification => "label_verification",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for ReviewKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Open,
    Complete,
    Adjudication,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewTask {
    pub id: RecordId,
    pub item_id: RecordId,
    #[serde(rename = "task_kind")]
    pub kind: ReviewKind,
    pub required_verdicts: usize,
    #[serde(default)]
    pub assigned: Vec<String>,
    pub state: TaskState,
}

/// The four norm-verification criteria plus an optional rectified description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormCheck {
    pub factually_correct: bool,
    pub in_category: bool,
    pub culture_specific: bool,
    pub detailed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_text: Option<String>,
}

impl NormCheck {
    pub fn all(pass: bool) -> Self {
        Self {
            factually_correct: pass,
            in_category: pass,
            culture_specific: pass,
            detailed: pass,
            edited_text: None,
        }
    }

    pub fn criteria(&self) -> [(&'static str, bool); 4] {
        [
            ("factually_correct", self.factually_correct),
            ("in_category", self.in_category),
            ("culture_specific", self.culture_specific),
            ("detailed", self.detailed),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaithfulnessCheck {
    pub entails: bool,
}

/// Likert dimensions are 1..=5; the on-topic question is binary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityRating {
    pub on_topic: bool,
    pub naturalness: u8,
    pub nativeness: u8,
    pub coherence: u8,
    pub interestingness: u8,
}

impl QualityRating {
    pub fn likert(&self) -> [(&'static str, u8); 4] {
        [
            ("naturalness", self.naturalness),
            ("nativeness", self.nativeness),
            ("coherence", self.coherence),
            ("interestingness", self.interestingness),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnCheck {
    Confirm,
    Correct(ObservanceLabel),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelCheck {
    pub turns: Vec<TurnCheck>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VerdictPayload {
    NormVerification(NormCheck),
    SituationFaithfulness(FaithfulnessCheck),
    DialogueQuality(QualityRating),
    LabelVerification(LabelCheck),
}

impl VerdictPayload {
    pub fn kind(&self) -> ReviewKind {
        match self {
            VerdictPayload::NormVerification(_) => ReviewKind::NormVerification,
            VerdictPayload::SituationFaithfulness(_) => ReviewKind::SituationFaithfulness,
            VerdictPayload::DialogueQuality(_) => ReviewKind::DialogueQuality,
            VerdictPayload::LabelVerification(_) => ReviewKind::LabelVerification,
        }
    }

    /// Decodes an untagged request body according to the task kind.
    pub fn from_json(kind: ReviewKind, value: serde_json::Value) -> Result<Self, serde_json::Error> {
        Ok(match kind {
            ReviewKind::NormVerification => Self::NormVerification(serde_json::from_value(value)?),
            ReviewKind::SituationFaithfulness => {
                Self::SituationFaithfulness(serde_json::from_value(value)?)
            }
            ReviewKind::DialogueQuality => Self::DialogueQuality(serde_json::from_value(value)?),
            ReviewKind::LabelVerification => Self::LabelVerification(serde_json::from_value(value)?),
        })
    }

    /// Payload-local schema problems (value ranges). Turn counts are checked against the item.
    pub fn schema_errors(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            VerdictPayload::DialogueQuality(q) => {
                for (name, v) in q.likert() {
                    if !(1..=5).contains(&v) {
                        out.push(format!("{name} must be in 1..=5, got {v}"));
                    }
                }
            }
            VerdictPayload::NormVerification(n)
                if n.edited_text.as_deref().is_some_and(|t| t.trim().is_empty()) => {
                    out.push("edited_text must not be blank".into());
                }
            _ => {}
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub id: RecordId,
    pub task_id: RecordId,
    pub annotator_id: String,
    pub payload: VerdictPayload,
    /// Adjudication verdicts resolve disagreement and finalize the task alone.
    #[serde(default)]
    pub adjudication: bool,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
    NeedsAdjudication,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityMeans {
    pub naturalness: f64,
    pub nativeness: f64,
    pub coherence: f64,
    pub interestingness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewAggregate {
    pub id: RecordId,
    pub task_id: RecordId,
    pub decision: Decision,
    #[serde(default)]
    pub quality_means: Option<QualityMeans>,
    pub vote_counts: BTreeMap<String, usize>,
    /// Final per-turn labels for label verification tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_labels: Option<Vec<ObservanceLabel>>,
    /// Rectified norm description agreed by reviewers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_text: Option<String>,
}
