use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{NormCategory, Polarity, RecordId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    S0Augment,
    S0Transfer,
    S1Scenarios,
    S2Elaborate,
    S3Dialogue,
    S4Label,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::S0Augment,
        Stage::S0Transfer,
        Stage::S1Scenarios,
        Stage::S2Elaborate,
        Stage::S3Dialogue,
        Stage::S4Label,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::S0Augment => "s0_augment",
            Stage::S0Transfer => "s0_transfer",
            Stage::S1Scenarios => "s1_scenarios",
            Stage::S2Elaborate => "s2_elaborate",
            Stage::S3Dialogue => "s3_dialogue",
            Stage::S4Label => "s4_label",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Pending,
    Running,
    Done,
    Failed,
    Quarantined,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageJob {
    pub id: RecordId,
    pub stage: Stage,
    pub input_ids: Vec<RecordId>,
    #[serde(default)]
    pub polarity: Option<Polarity>,
    #[serde(default)]
    pub category: Option<NormCategory>,
    /// Replicate index when one input fans out to several jobs of the same stage.
    #[serde(default)]
    pub replicate: u32,
    /// Number of items asked of the model, when the prompt asks for a list.
    #[serde(default)]
    pub requested: Option<usize>,
    pub seed_tag: String,
    pub state: JobState,
    #[serde(default)]
    pub output_ids: Vec<RecordId>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Completion text kept for quarantine inspection.
    #[serde(default)]
    pub raw_completion: Option<String>,
}

impl StageJob {
    pub fn new(stage: Stage, input_ids: Vec<RecordId>) -> Self {
        Self {
            id: RecordId::unassigned(),
            stage,
            input_ids,
            polarity: None,
            category: None,
            replicate: 0,
            requested: None,
            seed_tag: String::new(),
            state: JobState::Pending,
            output_ids: Vec::new(),
            error: None,
            warnings: Vec::new(),
            raw_completion: None,
        }
    }

    /// Identity used to decide whether a job for the same work already exists.
    pub fn work_key(&self) -> String {
        let ids: Vec<&str> = self.input_ids.iter().map(RecordId::as_str).collect();
        format!(
            "{}|{}|{}|{}|{}",
            self.stage,
            ids.join(","),
            self.polarity.map(Polarity::as_str).unwrap_or("-"),
            self.category.map(NormCategory::as_str).unwrap_or("-"),
            self.replicate
        )
    }
}
