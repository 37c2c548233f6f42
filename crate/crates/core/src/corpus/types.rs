use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Opaque record identifier. Empty means "not yet assigned"; the store fills it on append.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RecordId(pub String);

impl RecordId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn unassigned() -> Self {
        Self(String::new())
    }

    pub fn is_unassigned(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RecordId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormCategory {
    Apology,
    Compliment,
    Condolence,
    Criticism,
    Greeting,
    Leave,
    Persuasion,
    Request,
    ResponseToCompliment,
    GivingThanks,
}

impl NormCategory {
    pub const ALL: [NormCategory; 10] = [
        NormCategory::Apology,
        NormCategory::Compliment,
        NormCategory::Condolence,
        NormCategory::Criticism,
        NormCategory::Greeting,
        NormCategory::Leave,
        NormCategory::Persuasion,
        NormCategory::Request,
        NormCategory::ResponseToCompliment,
        NormCategory::GivingThanks,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NormCategory::Apology => "apology",
            NormCategory::Compliment => "compliment",
            NormCategory::Condolence => "condolence",
            NormCategory::Criticism => "criticism",
            NormCategory::Greeting => "greeting",
            NormCategory::Leave => "leave",
            NormCategory::Persuasion => "persuasion",
            NormCategory::Request => "request",
            NormCategory::ResponseToCompliment => "response_to_compliment",
            NormCategory::GivingThanks => "giving_thanks",
        }
    }

    /// Human-readable conversation type used inside prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            NormCategory::Apology => "Apology",
            NormCategory::Compliment => "Compliment",
            NormCategory::Condolence => "Condolence",
            NormCategory::Criticism => "Criticism",
            NormCategory::Greeting => "Greeting",
            NormCategory::Leave => "Leave",
            NormCategory::Persuasion => "Persuasion",
            NormCategory::Request => "Request",
            NormCategory::ResponseToCompliment => "Response to Compliment",
            NormCategory::GivingThanks => "Giving Thanks",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let key = s.trim().to_lowercase().replace([' ', '-'], "_");
        Self::ALL.into_iter().find(|c| c.as_str() == key)
    }
}

impl fmt::Display for NormCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Culture {
    Chinese,
    American,
}

impl Culture {
    /// Dialogue language used for this culture's dialogues.
    pub fn language(self) -> Language {
        match self {
            Culture::Chinese => Language::Zh,
            Culture::American => Language::En,
        }
    }

    pub fn society(self) -> &'static str {
        match self {
            Culture::Chinese => "Chinese",
            Culture::American => "American",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Culture::Chinese => "chinese",
            Culture::American => "american",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    Zh,
    En,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::Zh => "zh",
            Language::En => "en",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_lowercase().as_str() {
            "zh" | "chinese" => Some(Language::Zh),
            "en" | "english" => Some(Language::En),
            _ => None,
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormOrigin {
    ExpertSeed,
    Generated,
    Transferred,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Adherence,
    Violation,
}

impl Polarity {
    pub const BOTH: [Polarity; 2] = [Polarity::Adherence, Polarity::Violation];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Adherence => "adherence",
            Polarity::Violation => "violation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifecycleState {
    Draft,
    UnderReview,
    Accepted,
    Rejected,
}

impl LifecycleState {
    pub fn is_decided(self) -> bool {
        matches!(self, LifecycleState::Accepted | LifecycleState::Rejected)
    }

    /// Whether a stored record may move from `self` to `next`.
    pub fn can_become(self, next: LifecycleState) -> bool {
        use LifecycleState::*;
        self == next
            || matches!(
                (self, next),
                (Draft, UnderReview) | (UnderReview, Accepted) | (UnderReview, Rejected)
            )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifecycleStatus {
    pub state: LifecycleState,
    /// Aggregate that decided the state, when accepted or rejected through review.
    #[serde(default)]
    pub decided_by: Option<RecordId>,
}

impl LifecycleStatus {
    pub fn draft() -> Self {
        Self { state: LifecycleState::Draft, decided_by: None }
    }

    pub fn under_review() -> Self {
        Self { state: LifecycleState::UnderReview, decided_by: None }
    }

    pub fn decided(state: LifecycleState, aggregate: RecordId) -> Self {
        Self { state, decided_by: Some(aggregate) }
    }

    pub fn is_accepted(&self) -> bool {
        self.state == LifecycleState::Accepted
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialNorm {
    pub id: RecordId,
    pub culture: Culture,
    pub category: NormCategory,
    pub description: String,
    #[serde(default)]
    pub verbal_evidence: Vec<String>,
    pub origin: NormOrigin,
    /// Source norm of the other culture, set for transferred norms.
    #[serde(default)]
    pub source_norm_id: Option<RecordId>,
    pub status: LifecycleStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: RecordId,
    pub norm_id: RecordId,
    pub setting: String,
    pub participants: String,
    pub raw_line: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Situation {
    pub id: RecordId,
    pub norm_id: RecordId,
    pub scenario_id: RecordId,
    pub polarity: Polarity,
    pub text: String,
    pub status: LifecycleStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub speaker: String,
    pub utterance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: RecordId,
    pub norm_id: RecordId,
    pub situation_id: RecordId,
    pub language: Language,
    pub turns: Vec<Turn>,
    pub status: LifecycleStatus,
}

impl Dialogue {
    /// Distinct speakers in order of first appearance.
    pub fn speakers(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for t in &self.turns {
            if seen.insert(t.speaker.as_str()) {
                out.push(t.speaker.as_str());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObservanceLabel {
    Adhered,
    Violated,
    NotRelevant,
}

impl ObservanceLabel {
    pub const ALL: [ObservanceLabel; 3] =
        [ObservanceLabel::Adhered, ObservanceLabel::NotRelevant, ObservanceLabel::Violated];

    /// Wire name, as serialized.
    pub fn as_str(self) -> &'static str {
        match self {
            ObservanceLabel::Adhered => "Adhered",
            ObservanceLabel::Violated => "Violated",
            ObservanceLabel::NotRelevant => "NotRelevant",
        }
    }

    /// The label as printed in model output and reports.
    pub fn display_name(self) -> &'static str {
        match self {
            ObservanceLabel::Adhered => "Adhered",
            ObservanceLabel::Violated => "Violated",
            ObservanceLabel::NotRelevant => "Not Relevant",
        }
    }

    /// Accepts "Adhered", "Violated", "Not Relevant" with lenient case and spacing.
    pub fn parse(token: &str) -> Option<Self> {
        let norm: String = token
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
            .flat_map(char::to_lowercase)
            .collect();
        match norm.as_str() {
            "adhered" => Some(ObservanceLabel::Adhered),
            "violated" => Some(ObservanceLabel::Violated),
            "notrelevant" => Some(ObservanceLabel::NotRelevant),
            _ => None,
        }
    }
}

impl fmt::Display for ObservanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnLabel {
    pub turn_index: usize,
    pub label: ObservanceLabel,
    pub explanation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationSource {
    Model,
    Gold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnAnnotationSet {
    pub id: RecordId,
    pub dialogue_id: RecordId,
    pub norm_action: String,
    pub norm_actors: Vec<String>,
    pub labels: Vec<TurnLabel>,
    pub source: AnnotationSource,
    pub status: LifecycleStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Norm,
    Scenario,
    Situation,
    Dialogue,
    Annotation,
    ReviewTask,
    Verdict,
    Aggregate,
    Job,
}

impl RecordKind {
    pub const ALL: [RecordKind; 9] = [
        RecordKind::Norm,
        RecordKind::Scenario,
        RecordKind::Situation,
        RecordKind::Dialogue,
        RecordKind::Annotation,
        RecordKind::ReviewTask,
        RecordKind::Verdict,
        RecordKind::Aggregate,
        RecordKind::Job,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Norm => "norm",
            RecordKind::Scenario => "scenario",
            RecordKind::Situation => "situation",
            RecordKind::Dialogue => "dialogue",
            RecordKind::Annotation => "annotation",
            RecordKind::ReviewTask => "review_task",
            RecordKind::Verdict => "verdict",
            RecordKind::Aggregate => "aggregate",
            RecordKind::Job => "job",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// JSON-Lines file holding this kind.
    pub fn file_name(self) -> &'static str {
        match self {
            RecordKind::Norm => "norms.jsonl",
            RecordKind::Scenario => "scenarios.jsonl",
            RecordKind::Situation => "situations.jsonl",
            RecordKind::Dialogue => "dialogues.jsonl",
            RecordKind::Annotation => "annotations.jsonl",
            RecordKind::ReviewTask | RecordKind::Verdict | RecordKind::Aggregate => "reviews.jsonl",
            RecordKind::Job => "jobs.jsonl",
        }
    }

    pub(crate) fn id_prefix(self) -> &'static str {
        match self {
            RecordKind::Norm => "norm",
            RecordKind::Scenario => "scn",
            RecordKind::Situation => "sit",
            RecordKind::Dialogue => "dlg",
            RecordKind::Annotation => "ann",
            RecordKind::ReviewTask => "task",
            RecordKind::Verdict => "vrd",
            RecordKind::Aggregate => "agg",
            RecordKind::Job => "job",
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
