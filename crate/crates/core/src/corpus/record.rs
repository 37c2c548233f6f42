use serde::{Deserialize, Serialize};

use super::types::*;
use crate::pipeline::StageJob;
use crate::review::{ReviewAggregate, ReviewTask, Verdict};

/// Every persisted record, tagged by `kind` on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Norm(SocialNorm),
    Scenario(Scenario),
    Situation(Situation),
    Dialogue(Dialogue),
    Annotation(TurnAnnotationSet),
    ReviewTask(ReviewTask),
    Verdict(Verdict),
    Aggregate(ReviewAggregate),
    Job(StageJob),
}

impl Record {
    pub fn kind(&self) -> RecordKind {
        match self {
            Record::Norm(_) => RecordKind::Norm,
            Record::Scenario(_) => RecordKind::Scenario,
            Record::Situation(_) => RecordKind::Situation,
            Record::Dialogue(_) => RecordKind::Dialogue,
            Record::Annotation(_) => RecordKind::Annotation,
            Record::ReviewTask(_) => RecordKind::ReviewTask,
            Record::Verdict(_) => RecordKind::Verdict,
            Record::Aggregate(_) => RecordKind::Aggregate,
            Record::Job(_) => RecordKind::Job,
        }
    }

    pub fn id(&self) -> &RecordId {
        match self {
            Record::Norm(r) => &r.id,
            Record::Scenario(r) => &r.id,
            Record::Situation(r) => &r.id,
            Record::Dialogue(r) => &r.id,
            Record::Annotation(r) => &r.id,
            Record::ReviewTask(r) => &r.id,
            Record::Verdict(r) => &r.id,
            Record::Aggregate(r) => &r.id,
            Record::Job(r) => &r.id,
        }
    }

    pub(crate) fn set_id(&mut self, id: RecordId) {
        match self {
            Record::Norm(r) => r.id = id,
            Record::Scenario(r) => r.id = id,
            Record::Situation(r) => r.id = id,
            Record::Dialogue(r) => r.id = id,
            Record::Annotation(r) => r.id = id,
            Record::ReviewTask(r) => r.id = id,
            Record::Verdict(r) => r.id = id,
            Record::Aggregate(r) => r.id = id,
            Record::Job(r) => r.id = id,
        }
    }

    /// Lifecycle status for reviewable kinds.
    pub fn status(&self) -> Option<&LifecycleStatus> {
        match self {
            Record::Norm(r) => Some(&r.status),
            Record::Situation(r) => Some(&r.status),
            Record::Dialogue(r) => Some(&r.status),
            Record::Annotation(r) => Some(&r.status),
            _ => None,
        }
    }

    pub(crate) fn status_mut(&mut self) -> Option<&mut LifecycleStatus> {
        match self {
            Record::Norm(r) => Some(&mut r.status),
            Record::Situation(r) => Some(&mut r.status),
            Record::Dialogue(r) => Some(&mut r.status),
            Record::Annotation(r) => Some(&mut r.status),
            _ => None,
        }
    }
}

macro_rules! record_from {
    ($($ty:ty => $variant:ident),* $(,)?) => {
        $(
            impl From<$ty> for Record {
                fn from(r: $ty) -> Self {
                    Record::$variant(r)
                }
            }
        )*
    };
}

record_from! {
    SocialNorm => Norm,
    Scenario => Scenario,
    Situation => Situation,
    Dialogue => Dialogue,
    TurnAnnotationSet => Annotation,
    ReviewTask => ReviewTask,
    Verdict => Verdict,
    ReviewAggregate => Aggregate,
    StageJob => Job,
}
