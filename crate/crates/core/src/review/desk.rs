use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::deid::Pseudonyms;
use super::model::*;
use super::rules::{aggregate, resolve_labels, RuleError};
use crate::corpus::*;
use crate::llm::verbal_evidence;
use crate::metrics::{fleiss_kappa, MetricError, RatingMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Annotator,
    Adjudicator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reviewer {
    pub id: String,
    pub role: Role,
}

impl Reviewer {
    pub fn annotator(id: impl Into<String>) -> Self {
        Self { id: id.into(), role: Role::Annotator }
    }

    pub fn adjudicator(id: impl Into<String>) -> Self {
        Self { id: id.into(), role: Role::Adjudicator }
    }
}

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("no task {0}")]
    TaskNotFound(RecordId),
    #[error("no item {0}")]
    ItemNotFound(RecordId),
    #[error("{item} is {state:?}, not under review")]
    NotUnderReview { item: RecordId, state: LifecycleState },
    #[error("{item} already has open {kind} task {task}")]
    DuplicateTask { item: RecordId, kind: ReviewKind, task: RecordId },
    #[error("{annotator} already judged {task}")]
    DuplicateVerdict { task: RecordId, annotator: String },
    #[error("task {task} is {state:?}")]
    Closed { task: RecordId, state: TaskState },
    #[error("payload rejected: {0}")]
    Schema(String),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Verdicts needed per task kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quotas(pub BTreeMap<ReviewKind, usize>);

impl Default for Quotas {
    fn default() -> Self {
        let mut m: BTreeMap<ReviewKind, usize> = ReviewKind::ALL.into_iter().map(|k| (k, 3)).collect();
        m.insert(ReviewKind::LabelVerification, 2);
        Self(m)
    }
}

impl Quotas {
    pub fn uniform(n: usize) -> Self {
        Self(ReviewKind::ALL.into_iter().map(|k| (k, n)).collect())
    }

    pub fn get(&self, kind: ReviewKind) -> usize {
        self.0.get(&kind).copied().unwrap_or(3)
    }
}

/// Record kind each review kind judges.
pub fn item_kind(kind: ReviewKind) -> RecordKind {
    match kind {
        ReviewKind::NormVerification => RecordKind::Norm,
        ReviewKind::SituationFaithfulness => RecordKind::Situation,
        ReviewKind::DialogueQuality => RecordKind::Dialogue,
        ReviewKind::LabelVerification => RecordKind::Annotation,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldInput {
    Boolean,
    Likert,
    Text,
    TurnCheck,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormField {
    /// JSON path in the verdict payload, e.g. `naturalness` or `turns[3]`.
    pub name: String,
    pub input: FieldInput,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
}

/// Fields of the verdict payload for a task kind.
pub fn form_schema(kind: ReviewKind, turns: usize) -> Vec<FormField> {
    let field = |name: &str, input: FieldInput, required: bool| FormField {
        name: name.to_string(),
        input,
        required,
        options: Vec::new(),
    };
    match kind {
        ReviewKind::NormVerification => {
            let mut f: Vec<FormField> = NormCheck::all(true)
                .criteria()
                .iter()
                .map(|(n, _)| field(n, FieldInput::Boolean, true))
                .collect();
            f.push(field("edited_text", FieldInput::Text, false));
            f
        }
        ReviewKind::SituationFaithfulness => vec![field("entails", FieldInput::Boolean, true)],
        ReviewKind::DialogueQuality => {
            let mut f = vec![field("on_topic", FieldInput::Boolean, true)];
            f.extend(["naturalness", "nativeness", "coherence", "interestingness"].map(|n| FormField {
                options: (1..=5).map(|v| v.to_string()).collect(),
                ..field(n, FieldInput::Likert, true)
            }));
            f
        }
        ReviewKind::LabelVerification => {
            let mut options = vec!["confirm".to_string()];
            options.extend(ObservanceLabel::ALL.iter().map(|l| l.as_str().to_string()));
            (0..turns)
                .map(|i| FormField { options: options.clone(), ..field(&format!("turns[{i}]"), FieldInput::TurnCheck, true) })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormView {
    pub id: RecordId,
    pub culture: Culture,
    pub category: NormCategory,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SituationView {
    pub id: RecordId,
    pub polarity: Polarity,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelsView {
    pub norm_action: String,
    pub norm_actors: Vec<String>,
    pub labels: Vec<TurnLabel>,
}

/// What an annotator sees for one task. Speaker names are already replaced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: RecordId,
    pub kind: ReviewKind,
    pub item_id: RecordId,
    pub state: TaskState,
    pub required_verdicts: usize,
    pub verdicts: usize,
    pub norm: Option<NormView>,
    pub situation: Option<SituationView>,
    pub dialogue: Option<Vec<Turn>>,
    pub model_labels: Option<LabelsView>,
    pub form: Vec<FormField>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub verdict_id: RecordId,
    pub task_id: RecordId,
    pub task_state: TaskState,
    pub decision: Option<Decision>,
    pub aggregate_id: Option<RecordId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QueueRow {
    pub kind: Option<ReviewKind>,
    pub stage: String,
    pub open: usize,
    pub adjudication: usize,
    pub complete: usize,
    pub verdicts: usize,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub queues: Vec<QueueRow>,
    pub open_total: usize,
    pub adjudication_total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Overall,
    Adherence,
    Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaStratum {
    pub stratum: Stratum,
    pub support: usize,
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kind: ReviewKind,
    pub question: String,
    pub raters: usize,
    pub strata: Vec<KappaStratum>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct GoldExport {
    pub gold: Vec<TurnAnnotationSet>,
    pub agreement: Vec<AgreementReport>,
}

/// Review queue operations over a shared store.
pub struct ReviewDesk {
    store: Arc<Store>,
    clock: Arc<dyn Clock>,
    quotas: Quotas,
    // one submission at a time so the last verdict triggers aggregation exactly once
    gate: Mutex<()>,
}

impl ReviewDesk {
    pub fn new(store: Arc<Store>, clock: Arc<dyn Clock>, quotas: Quotas) -> Self {
        Self { store, clock, quotas, gate: Mutex::new(()) }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn quotas(&self) -> &Quotas {
        &self.quotas
    }

    fn item_status(&self, kind: ReviewKind, item: &RecordId) -> Result<Record, ReviewError> {
        self.store
            .get(item_kind(kind), item)
            .ok_or_else(|| ReviewError::ItemNotFound(item.clone()))
    }

    fn tasks_for(&self, item: &RecordId, kind: ReviewKind) -> Vec<ReviewTask> {
        self.store
            .review_tasks()
            .into_iter()
            .filter(|t| &t.item_id == item && t.kind == kind)
            .collect()
    }

    pub fn verdicts_for(&self, task: &RecordId) -> Vec<Verdict> {
        self.store.verdicts().into_iter().filter(|v| &v.task_id == task).collect()
    }

    pub fn enqueue(&self, item: &RecordId, kind: ReviewKind, required: usize) -> Result<ReviewTask, ReviewError> {
        let _g = self.gate.lock().unwrap_or_else(|e| e.into_inner());
        self.enqueue_locked(item, kind, required)
    }

    fn enqueue_locked(&self, item: &RecordId, kind: ReviewKind, required: usize) -> Result<ReviewTask, ReviewError> {
        let record = self.item_status(kind, item)?;
        let state = record.status().map_or(LifecycleState::Draft, |s| s.state);
        if state != LifecycleState::UnderReview {
            return Err(ReviewError::NotUnderReview { item: item.clone(), state });
        }
        if let Some(t) = self.tasks_for(item, kind).into_iter().find(|t| t.state != TaskState::Complete) {
            return Err(ReviewError::DuplicateTask { item: item.clone(), kind, task: t.id });
        }
        let mut task = ReviewTask {
            id: RecordId::unassigned(),
            item_id: item.clone(),
            kind,
            required_verdicts: required,
            assigned: Vec::new(),
            state: TaskState::Open,
        };
        task.id = self.store.append(task.clone())?;
        Ok(task)
    }

    /// Moves a draft item to under_review and opens a task with the default quota.
    pub fn submit_for_review(&self, item: &RecordId, kind: ReviewKind) -> Result<ReviewTask, ReviewError> {
        let _g = self.gate.lock().unwrap_or_else(|e| e.into_inner());
        let mut record = self.item_status(kind, item)?;
        if let Some(status) = record.status_mut() {
            if status.state == LifecycleState::Draft {
                *status = LifecycleStatus::under_review();
                self.store.update(record)?;
            }
        }
        self.enqueue_locked(item, kind, self.quotas.get(kind))
    }

    /// Next task for the reviewer: fewest verdicts first, then oldest. Adjudicators see
    /// disputed tasks before open ones.
    pub fn next_task(&self, reviewer: &Reviewer, kind: Option<ReviewKind>) -> Result<Option<TaskView>, ReviewError> {
        let _g = self.gate.lock().unwrap_or_else(|e| e.into_inner());
        let verdicts = self.store.verdicts();
        let mut counts: HashMap<&RecordId, usize> = HashMap::new();
        let mut judged: HashMap<&RecordId, bool> = HashMap::new();
        for v in &verdicts {
            if !v.adjudication {
                *counts.entry(&v.task_id).or_default() += 1;
            }
            if v.annotator_id == reviewer.id {
                judged.insert(&v.task_id, true);
            }
        }
        let tasks = self.store.review_tasks();
        let candidates = tasks
            .iter()
            .enumerate()
            .filter(|(_, t)| kind.is_none_or(|k| t.kind == k))
            .filter(|(_, t)| !judged.contains_key(&t.id))
            .filter(|(_, t)| match t.state {
                TaskState::Open => true,
                TaskState::Adjudication => reviewer.role == Role::Adjudicator,
                TaskState::Complete => false,
            });
        let pick = candidates
            .min_by_key(|(i, t)| (t.state != TaskState::Adjudication, counts.get(&t.id).copied().unwrap_or(0), *i))
            .map(|(_, t)| t.clone());
        let Some(mut task) = pick else { return Ok(None) };
        if !task.assigned.contains(&reviewer.id) {
            task.assigned.push(reviewer.id.clone());
            self.store.update(task.clone())?;
        }
        self.view(&task).map(Some)
    }

    pub fn task_view(&self, task: &RecordId) -> Result<TaskView, ReviewError> {
        let task = self.store.review_task(task).ok_or_else(|| ReviewError::TaskNotFound(task.clone()))?;
        self.view(&task)
    }

    fn view(&self, task: &ReviewTask) -> Result<TaskView, ReviewError> {
        let ctx = ItemContext::load(&self.store, task.kind, &task.item_id)?;
        let names = ctx.pseudonyms();
        let turn_count = ctx.annotation.as_ref().map_or(0, |a| a.labels.len());
        Ok(TaskView {
            task_id: task.id.clone(),
            kind: task.kind,
            item_id: task.item_id.clone(),
            state: task.state,
            required_verdicts: task.required_verdicts,
            verdicts: self.verdicts_for(&task.id).iter().filter(|v| !v.adjudication).count(),
            norm: ctx.norm.as_ref().map(|n| NormView {
                id: n.id.clone(),
                culture: n.culture,
                category: n.category,
                description: names.apply(&n.description),
            }),
            situation: ctx.situation.as_ref().map(|s| SituationView {
                id: s.id.clone(),
                polarity: s.polarity,
                text: names.apply(&s.text),
            }),
            dialogue: ctx.dialogue.as_ref().map(|d| {
                d.turns
                    .iter()
                    .map(|t| Turn {
                        index: t.index,
                        speaker: names.apply(&t.speaker),
                        utterance: names.apply(&t.utterance),
                    })
                    .collect()
            }),
            model_labels: ctx.annotation.as_ref().map(|a| LabelsView {
                norm_action: names.apply(&a.norm_action),
                norm_actors: a.norm_actors.iter().map(|n| names.apply(n)).collect(),
                labels: a
                    .labels
                    .iter()
                    .map(|l| TurnLabel { explanation: names.apply(&l.explanation), ..l.clone() })
                    .collect(),
            }),
            form: form_schema(task.kind, turn_count),
        })
    }

    /// The stored record for any id, with speaker names replaced when it involves a dialogue.
    pub fn item_view(&self, item: &RecordId) -> Result<serde_json::Value, ReviewError> {
        let record = self.store.find_any(item).ok_or_else(|| ReviewError::ItemNotFound(item.clone()))?;
        let names = match &record {
            Record::Dialogue(d) => Pseudonyms::new(d.speakers()),
            Record::Annotation(a) => match self.store.dialogue(&a.dialogue_id) {
                Some(d) => Pseudonyms::new(d.speakers()),
                None => Pseudonyms::new(a.norm_actors.iter().map(String::as_str)),
            },
            _ => Pseudonyms::new([]),
        };
        let mut value = serde_json::to_value(&record).expect("records serialize");
        names.apply_json(&mut value);
        Ok(value)
    }

    pub fn submit_verdict(
        &self,
        reviewer: &Reviewer,
        task_id: &RecordId,
        body: serde_json::Value,
    ) -> Result<SubmitAck, ReviewError> {
        let _g = self.gate.lock().unwrap_or_else(|e| e.into_inner());
        let mut task = self
            .store
            .review_task(task_id)
            .ok_or_else(|| ReviewError::TaskNotFound(task_id.clone()))?;
        let adjudication = match task.state {
            TaskState::Open => false,
            TaskState::Adjudication if reviewer.role == Role::Adjudicator => true,
            state => return Err(ReviewError::Closed { task: task.id.clone(), state }),
        };
        let existing = self.verdicts_for(&task.id);
        if existing.iter().any(|v| v.annotator_id == reviewer.id) {
            return Err(ReviewError::DuplicateVerdict { task: task.id.clone(), annotator: reviewer.id.clone() });
        }
        let payload = VerdictPayload::from_json(task.kind, body).map_err(|e| ReviewError::Schema(e.to_string()))?;
        let problems = payload.schema_errors();
        if !problems.is_empty() {
            return Err(ReviewError::Schema(problems.join("; ")));
        }
        let ctx = ItemContext::load(&self.store, task.kind, &task.item_id)?;
        let model_labels: Option<Vec<ObservanceLabel>> =
            ctx.annotation.as_ref().map(|a| a.labels.iter().map(|l| l.label).collect());
        if let (VerdictPayload::LabelVerification(check), Some(model)) = (&payload, &model_labels) {
            if check.turns.len() != model.len() {
                return Err(ReviewError::Schema(format!(
                    "expected {} turn checks, got {}",
                    model.len(),
                    check.turns.len()
                )));
            }
        }

        let verdict = Verdict {
            id: RecordId::unassigned(),
            task_id: task.id.clone(),
            annotator_id: reviewer.id.clone(),
            payload,
            adjudication,
            timestamp: self.clock.now_millis(),
        };
        if !task.assigned.contains(&reviewer.id) {
            task.assigned.push(reviewer.id.clone());
        }
        let regular = existing.iter().filter(|v| !v.adjudication).count() + usize::from(!adjudication);
        if !adjudication && regular < task.required_verdicts {
            let ids = self.store.commit(vec![verdict.into()], vec![task.clone().into()])?;
            return Ok(SubmitAck {
                verdict_id: ids[0].clone(),
                task_id: task.id,
                task_state: TaskState::Open,
                decision: None,
                aggregate_id: None,
            });
        }

        // quota met: decide in the same call
        let mut all = existing;
        let staged_id = RecordId::new("pending-verdict");
        all.push(Verdict { id: staged_id, ..verdict.clone() });
        let mut agg = aggregate(&task, &all, model_labels.as_deref())?;
        task.state = match agg.decision {
            Decision::NeedsAdjudication => TaskState::Adjudication,
            _ => TaskState::Complete,
        };
        // ids are allocated by the store; reserve them by committing verdict and aggregate first in the batch
        let mut appends: Vec<Record> = vec![verdict.into()];
        agg.id = RecordId::unassigned();
        let decision = agg.decision;
        let edited = agg.edited_text.clone();
        let gold_labels = agg.gold_labels.clone();
        appends.push(agg.into());
        let ids = self.store.commit(appends, vec![task.clone().into()])?;
        let (verdict_id, agg_id) = (ids[0].clone(), ids[1].clone());

        if decision != Decision::NeedsAdjudication {
            let state = if decision == Decision::Accept { LifecycleState::Accepted } else { LifecycleState::Rejected };
            let mut item = self.item_status(task.kind, &task.item_id)?;
            if let Some(s) = item.status_mut() {
                *s = LifecycleStatus::decided(state, agg_id.clone());
            }
            if let (Record::Norm(n), Some(text)) = (&mut item, edited) {
                let evidence = verbal_evidence(&text);
                if !evidence.is_empty() {
                    n.verbal_evidence = evidence;
                }
                n.description = text;
            }
            let mut appends = Vec::new();
            if let (Record::Annotation(model), Some(labels)) = (&item, gold_labels) {
                appends.push(Record::Annotation(gold_set(model, &labels, agg_id.clone())));
            }
            self.store.commit(appends, vec![item])?;
        }
        Ok(SubmitAck {
            verdict_id,
            task_id: task.id,
            task_state: task.state,
            decision: Some(decision),
            aggregate_id: Some(agg_id),
        })
    }

    pub fn progress(&self) -> Progress {
        let tasks = self.store.review_tasks();
        let verdicts = self.store.verdicts();
        let mut queues = Vec::new();
        for kind in ReviewKind::ALL {
            let mut row = QueueRow { kind: Some(kind), stage: stage_of(kind).to_string(), ..Default::default() };
            for t in tasks.iter().filter(|t| t.kind == kind) {
                match t.state {
                    TaskState::Open => row.open += 1,
                    TaskState::Adjudication => row.adjudication += 1,
                    TaskState::Complete => row.complete += 1,
                }
            }
            row.verdicts = verdicts
                .iter()
                .filter(|v| v.payload.kind() == kind)
                .count();
            for r in self.store.list(item_kind(kind)) {
                match r.status().map(|s| s.state) {
                    Some(LifecycleState::Accepted) => row.accepted += 1,
                    Some(LifecycleState::Rejected) => row.rejected += 1,
                    _ => {}
                }
            }
            queues.push(row);
        }
        Progress {
            open_total: queues.iter().map(|q| q.open).sum(),
            adjudication_total: queues.iter().map(|q| q.adjudication).sum(),
            queues,
        }
    }

    /// Gold label sets plus kappa over the verdicts given before any adjudication.
    pub fn export_gold(&self) -> GoldExport {
        let gold = self
            .store
            .annotations()
            .into_iter()
            .filter(|a| a.source == AnnotationSource::Gold && a.status.is_accepted())
            .collect();
        let tasks = self.store.review_tasks();
        let mut by_task: HashMap<RecordId, Vec<Verdict>> = HashMap::new();
        for v in self.store.verdicts().into_iter().filter(|v| !v.adjudication) {
            by_task.entry(v.task_id.clone()).or_default().push(v);
        }
        let mut agreement = Vec::new();
        for (kind, question) in [
            (ReviewKind::SituationFaithfulness, "entails"),
            (ReviewKind::DialogueQuality, "on_topic"),
            (ReviewKind::LabelVerification, "turn_label"),
        ] {
            let judged: Vec<(&ReviewTask, &Vec<Verdict>)> = tasks
                .iter()
                .filter(|t| t.kind == kind)
                .filter_map(|t| by_task.get(&t.id).filter(|v| v.len() >= 2).map(|v| (t, v)))
                .collect();
            let Some(raters) = modal(judged.iter().map(|(_, v)| v.len())) else { continue };
            let mut items: Vec<(Option<Polarity>, Vec<String>)> = Vec::new();
            for (task, verdicts) in judged.into_iter().filter(|(_, v)| v.len() == raters) {
                let Ok(ctx) = ItemContext::load(&self.store, kind, &task.item_id) else { continue };
                let polarity = ctx.situation.as_ref().map(|s| s.polarity);
                let mut sorted = verdicts.clone();
                sorted.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
                match kind {
                    ReviewKind::LabelVerification => {
                        let Some(ann) = &ctx.annotation else { continue };
                        let model: Vec<ObservanceLabel> = ann.labels.iter().map(|l| l.label).collect();
                        let per: Vec<Vec<ObservanceLabel>> = sorted
                            .iter()
                            .filter_map(|v| match &v.payload {
                                VerdictPayload::LabelVerification(c) if c.turns.len() == model.len() => {
                                    Some(resolve_labels(&model, c))
                                }
                                _ => None,
                            })
                            .collect();
                        if per.len() != raters {
                            continue;
                        }
                        for turn in 0..model.len() {
                            items.push((polarity, per.iter().map(|l| l[turn].as_str().to_string()).collect()));
                        }
                    }
                    _ => {
                        let labels: Vec<String> = sorted
                            .iter()
                            .filter_map(|v| match &v.payload {
                                VerdictPayload::SituationFaithfulness(c) => Some(c.entails),
                                VerdictPayload::DialogueQuality(q) => Some(q.on_topic),
                                _ => None,
                            })
                            .map(|b| b.to_string())
                            .collect();
                        items.push((polarity, labels));
                    }
                }
            }
            let strata = [
                (Stratum::Overall, None),
                (Stratum::Adherence, Some(Polarity::Adherence)),
                (Stratum::Violation, Some(Polarity::Violation)),
            ]
            .into_iter()
            .map(|(stratum, filter)| {
                let rows: Vec<Vec<String>> = items
                    .iter()
                    .filter(|(p, _)| filter.is_none() || *p == filter)
                    .map(|(_, l)| l.clone())
                    .collect();
                kappa_stratum(stratum, &rows)
            })
            .collect();
            agreement.push(AgreementReport { kind, question: question.to_string(), raters, strata });
        }
        GoldExport { gold, agreement }
    }

    /// Gate coupling problems: decided items without a matching aggregate and vice versa.
    pub fn audit(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let tasks: HashMap<RecordId, ReviewTask> =
            self.store.review_tasks().into_iter().map(|t| (t.id.clone(), t)).collect();
        let aggregates: HashMap<RecordId, ReviewAggregate> =
            self.store.aggregates().into_iter().map(|a| (a.id.clone(), a)).collect();
        for kind in ReviewKind::ALL {
            for record in self.store.list(item_kind(kind)) {
                let Some(status) = record.status() else { continue };
                if !status.state.is_decided() {
                    continue;
                }
                let is_seed = matches!(&record, Record::Norm(n) if n.origin == NormOrigin::ExpertSeed);
                let is_gold = matches!(&record, Record::Annotation(a) if a.source == AnnotationSource::Gold);
                let Some(agg_id) = &status.decided_by else {
                    if !is_seed {
                        problems.push(format!("{} is {:?} without an aggregate", record.id(), status.state));
                    }
                    continue;
                };
                let Some(agg) = aggregates.get(agg_id) else {
                    problems.push(format!("{} cites missing aggregate {agg_id}", record.id()));
                    continue;
                };
                let expected = if status.state == LifecycleState::Accepted { Decision::Accept } else { Decision::Reject };
                if agg.decision != expected {
                    problems.push(format!("{} is {:?} but {agg_id} decided {:?}", record.id(), status.state, agg.decision));
                }
                let task_item = tasks.get(&agg.task_id).map(|t| &t.item_id);
                if !is_gold && task_item != Some(record.id()) {
                    problems.push(format!("{} cites {agg_id} which judged a different item", record.id()));
                }
            }
        }
        for agg in aggregates.values() {
            let Some(task) = tasks.get(&agg.task_id) else {
                problems.push(format!("{} has no task", agg.id));
                continue;
            };
            if agg.decision == Decision::NeedsAdjudication {
                continue;
            }
            let state = self
                .store
                .get(item_kind(task.kind), &task.item_id)
                .and_then(|r| r.status().map(|s| (s.state, s.decided_by.clone())));
            let want = if agg.decision == Decision::Accept { LifecycleState::Accepted } else { LifecycleState::Rejected };
            if state.as_ref().map(|(s, _)| *s) != Some(want) {
                problems.push(format!("{} decided {:?} but {} is {:?}", agg.id, agg.decision, task.item_id, state));
            }
        }
        problems.sort();
        problems
    }
}

fn gold_set(model: &TurnAnnotationSet, labels: &[ObservanceLabel], agg: RecordId) -> TurnAnnotationSet {
    TurnAnnotationSet {
        id: RecordId::unassigned(),
        dialogue_id: model.dialogue_id.clone(),
        norm_action: model.norm_action.clone(),
        norm_actors: model.norm_actors.clone(),
        labels: model
            .labels
            .iter()
            .zip(labels)
            .map(|(m, &label)| TurnLabel {
                turn_index: m.turn_index,
                label,
                explanation: if label == m.label { m.explanation.clone() } else { String::new() },
            })
            .collect(),
        source: AnnotationSource::Gold,
        status: LifecycleStatus::decided(LifecycleState::Accepted, agg),
    }
}

fn stage_of(kind: ReviewKind) -> &'static str {
    match kind {
        ReviewKind::NormVerification => "s0",
        ReviewKind::SituationFaithfulness => "s2",
        ReviewKind::DialogueQuality => "s3",
        ReviewKind::LabelVerification => "s4",
    }
}

fn modal(counts: impl Iterator<Item = usize>) -> Option<usize> {
    let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
    for c in counts {
        *freq.entry(c).or_default() += 1;
    }
    // larger rater count wins a frequency tie
    freq.into_iter().max_by_key(|&(c, f)| (f, c)).map(|(c, _)| c)
}

fn kappa_stratum(stratum: Stratum, rows: &[Vec<String>]) -> KappaStratum {
    let support = rows.len();
    let (kappa, note) = match RatingMatrix::from_labels(rows).and_then(|m| fleiss_kappa(&m)) {
        Ok(k) => (Some(k), None),
        Err(MetricError::DegenerateAgreement) => (None, Some("all ratings in one category".to_string())),
        Err(e) => (None, Some(e.to_string())),
    };
    KappaStratum { stratum, support, kappa, note }
}

/// An item with the records it depends on.
struct ItemContext {
    norm: Option<SocialNorm>,
    situation: Option<Situation>,
    dialogue: Option<Dialogue>,
    annotation: Option<TurnAnnotationSet>,
}

impl ItemContext {
    fn load(store: &Store, kind: ReviewKind, item: &RecordId) -> Result<Self, ReviewError> {
        let missing = || ReviewError::ItemNotFound(item.clone());
        let mut ctx = Self { norm: None, situation: None, dialogue: None, annotation: None };
        let mut dialogue_id = None;
        let mut situation_id = None;
        let mut norm_id = None;
        match kind {
            ReviewKind::LabelVerification => {
                let a = store.annotation(item).ok_or_else(missing)?;
                dialogue_id = Some(a.dialogue_id.clone());
                ctx.annotation = Some(a);
            }
            ReviewKind::DialogueQuality => dialogue_id = Some(item.clone()),
            ReviewKind::SituationFaithfulness => situation_id = Some(item.clone()),
            ReviewKind::NormVerification => norm_id = Some(item.clone()),
        }
        if let Some(id) = dialogue_id {
            let d = store.dialogue(&id).ok_or_else(missing)?;
            situation_id = Some(d.situation_id.clone());
            ctx.dialogue = Some(d);
        }
        if let Some(id) = situation_id {
            let s = store.situation(&id).ok_or_else(missing)?;
            norm_id = Some(s.norm_id.clone());
            ctx.situation = Some(s);
        }
        if let Some(id) = norm_id {
            ctx.norm = Some(store.norm(&id).ok_or_else(missing)?);
        }
        Ok(ctx)
    }

    fn pseudonyms(&self) -> Pseudonyms {
        match &self.dialogue {
            Some(d) => Pseudonyms::new(d.speakers()),
            None => Pseudonyms::new([]),
        }
    }
}
