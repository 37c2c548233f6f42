use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, PipelineConfig};
use super::job::{JobState, Stage, StageJob};
use crate::corpus::*;
use crate::llm::{
    bindings, parse_dialogue, parse_norm_list, parse_scenario_list, parse_situation, parse_turn_labels,
    polarity_instruction, render_prompt, CompletionRequest, Gateway, GatewayError, RawCompletion, RenderError,
    TemplateId,
};
use crate::review::{ReviewDesk, ReviewError, ReviewKind};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("no job {0}")]
    JobNotFound(RecordId),
    #[error("job {0} is not quarantined")]
    NotQuarantined(RecordId),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobOutcome {
    pub job_id: RecordId,
    pub stage: Stage,
    pub state: JobState,
    pub output_ids: Vec<RecordId>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

impl From<&StageJob> for JobOutcome {
    fn from(j: &StageJob) -> Self {
        Self {
            job_id: j.id.clone(),
            stage: j.stage,
            state: j.state,
            output_ids: j.output_ids.clone(),
            warnings: j.warnings.clone(),
            error: j.error.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub created: usize,
    pub done: usize,
    pub failed: usize,
    pub quarantined: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvanceReport {
    pub stages: Vec<StageReport>,
    pub outcomes: Vec<JobOutcome>,
}

impl AdvanceReport {
    fn from_outcomes(outcomes: Vec<JobOutcome>) -> Self {
        let stages = Stage::ALL
            .into_iter()
            .map(|stage| {
                let of = |s: JobState| outcomes.iter().filter(|o| o.stage == stage && o.state == s).count();
                StageReport {
                    stage,
                    created: outcomes.iter().filter(|o| o.stage == stage).count(),
                    done: of(JobState::Done),
                    failed: of(JobState::Failed),
                    quarantined: of(JobState::Quarantined),
                }
            })
            .collect();
        Self { stages, outcomes }
    }

    pub fn stage(&self, stage: Stage) -> &StageReport {
        self.stages.iter().find(|s| s.stage == stage).expect("all stages reported")
    }

    pub fn created(&self) -> usize {
        self.outcomes.len()
    }

    pub fn has_failures(&self) -> bool {
        self.outcomes.iter().any(|o| matches!(o.state, JobState::Failed | JobState::Quarantined))
    }

    /// One JSON object per stage.
    pub fn to_lines(&self) -> Vec<String> {
        self.stages
            .iter()
            .map(|s| serde_json::to_string(s).expect("report serializes"))
            .collect()
    }
}

impl fmt::Display for AdvanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} jobs", self.created())?;
        for s in self.stages.iter().filter(|s| s.created > 0) {
            writeln!(
                f,
                "{:<14} created={} done={} failed={} quarantined={}",
                s.stage.as_str(),
                s.created,
                s.done,
                s.failed,
                s.quarantined
            )?;
        }
        for o in self.outcomes.iter().filter(|o| o.state != JobState::Done) {
            writeln!(f, "  {} {} {:?}: {}", o.stage, o.job_id, o.state, o.error.as_deref().unwrap_or(""))?;
        }
        Ok(())
    }
}

struct Prepared {
    job: StageJob,
    request: CompletionRequest,
}

/// Runs generation stages against the store, gated on human acceptance.
pub struct Pipeline {
    store: Arc<Store>,
    gateway: Arc<Gateway>,
    desk: Arc<ReviewDesk>,
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(store: Arc<Store>, gateway: Arc<Gateway>, desk: Arc<ReviewDesk>, config: PipelineConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self { store, gateway, desk, config })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    fn norm(&self, id: &RecordId) -> Result<SocialNorm, PipelineError> {
        self.store.norm(id).ok_or_else(|| PipelineError::Precondition(format!("no norm {id}")))
    }

    fn accepted_norm(&self, id: &RecordId) -> Result<SocialNorm, PipelineError> {
        let n = self.norm(id)?;
        if !n.status.is_accepted() {
            return Err(PipelineError::Precondition(format!("norm {id} is {:?}", n.status.state)));
        }
        Ok(n)
    }

    fn accepted_seeds(&self, category: NormCategory) -> Vec<SocialNorm> {
        self.store
            .norms()
            .into_iter()
            .filter(|n| {
                n.origin == NormOrigin::ExpertSeed
                    && n.culture == Culture::Chinese
                    && n.category == category
                    && n.status.is_accepted()
            })
            .collect()
    }

    fn wants(&self, culture: Culture) -> bool {
        self.config.cultures.contains(&culture)
    }

    /// Jobs whose inputs pass their gates and that have not run yet, in stage then store order.
    /// Failed jobs are planned again under their existing id.
    pub fn plan(&self) -> Vec<StageJob> {
        let existing: HashMap<String, StageJob> =
            self.store.jobs().into_iter().map(|j| (j.work_key(), j)).collect();
        let mut planned: Vec<StageJob> = Vec::new();
        let mut offer = |job: StageJob| match existing.get(&job.work_key()) {
            None => planned.push(job),
            Some(old) if old.state == JobState::Failed => planned.push(StageJob { requested: job.requested, ..old.clone() }),
            Some(_) => {}
        };
        let norms = self.store.norms();
        let accepted: Vec<&SocialNorm> = norms.iter().filter(|n| n.status.is_accepted() && self.wants(n.culture)).collect();

        if self.config.stage0_enabled {
            if self.wants(Culture::Chinese) {
                for category in NormCategory::ALL {
                    let seeds = self.accepted_seeds(category);
                    if !seeds.is_empty() {
                        let mut job = StageJob::new(Stage::S0Augment, seeds.into_iter().map(|n| n.id).collect());
                        job.category = Some(category);
                        job.requested = Some(self.config.augment_count);
                        offer(job);
                    }
                }
            }
            if self.wants(Culture::American) {
                for n in norms.iter().filter(|n| n.culture == Culture::Chinese && n.status.is_accepted()) {
                    offer(StageJob::new(Stage::S0Transfer, vec![n.id.clone()]));
                }
            }
        }
        for n in &accepted {
            let mut job = StageJob::new(Stage::S1Scenarios, vec![n.id.clone()]);
            job.requested = Some(self.config.scenarios_per_norm);
            offer(job);
        }
        let accepted_ids: HashMap<&RecordId, &SocialNorm> = accepted.iter().map(|n| (&n.id, *n)).collect();
        for s in self.store.scenarios() {
            if !accepted_ids.contains_key(&s.norm_id) {
                continue;
            }
            for polarity in Polarity::BOTH {
                for replicate in 0..self.config.situations_per_scenario {
                    let mut job = StageJob::new(Stage::S2Elaborate, vec![s.norm_id.clone(), s.id.clone()]);
                    job.polarity = Some(polarity);
                    job.replicate = replicate as u32;
                    offer(job);
                }
            }
        }
        for s in self.store.situations() {
            if s.status.is_accepted() && accepted_ids.contains_key(&s.norm_id) {
                offer(StageJob::new(Stage::S3Dialogue, vec![s.id.clone()]));
            }
        }
        for d in self.store.dialogues() {
            if d.status.is_accepted() && accepted_ids.contains_key(&d.norm_id) {
                offer(StageJob::new(Stage::S4Label, vec![d.id.clone()]));
            }
        }
        planned
    }

    /// Plans and runs every eligible job, repeating while ungated outputs unlock more work.
    pub fn advance(&self) -> AdvanceReport {
        let mut outcomes = Vec::new();
        let mut seen = std::collections::HashSet::new();
        loop {
            let mut jobs = self.plan();
            jobs.retain(|j| seen.insert(j.work_key()));
            if jobs.is_empty() {
                break;
            }
            let batch = self.execute(jobs);
            // a pass that only re-fails the same jobs would loop forever
            let progressed = batch.iter().any(|o| o.state == JobState::Done);
            outcomes.extend(batch);
            if !progressed {
                break;
            }
        }
        AdvanceReport::from_outcomes(outcomes)
    }

    /// Renders prompts, calls the backend concurrently, then commits results in job order.
    pub fn execute(&self, jobs: Vec<StageJob>) -> Vec<JobOutcome> {
        let mut outcomes: Vec<Option<JobOutcome>> = vec![None; jobs.len()];
        let mut prepared: Vec<(usize, Prepared)> = Vec::new();
        for (i, job) in jobs.into_iter().enumerate() {
            match self.prepare(job.clone()) {
                Ok(p) => prepared.push((i, p)),
                Err(e) => {
                    let mut job = job;
                    job.state = JobState::Failed;
                    job.error = Some(e.to_string());
                    outcomes[i] = Some(self.save_job(job));
                }
            }
        }
        let requests: Vec<&CompletionRequest> = prepared.iter().map(|(_, p)| &p.request).collect();
        let results = self.call_all(&requests);
        for ((i, p), result) in prepared.into_iter().zip(results) {
            outcomes[i] = Some(self.finish(p.job, result));
        }
        outcomes.into_iter().map(|o| o.expect("every job has an outcome")).collect()
    }

    fn call_all(&self, requests: &[&CompletionRequest]) -> Vec<Result<RawCompletion, GatewayError>> {
        let slots: Vec<Mutex<Option<Result<RawCompletion, GatewayError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.config.parallelism.min(requests.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(req) = requests.get(i) else { break };
                    let result = self.gateway.complete(req);
                    *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().unwrap_or_else(|e| e.into_inner()).expect("every request was attempted"))
            .collect()
    }

    fn request(&self, job: &StageJob, prompt: String) -> CompletionRequest {
        let temperature = if job.stage == Stage::S4Label {
            self.config.label_temperature
        } else {
            self.config.generation_temperature
        };
        let mut req = CompletionRequest::new(prompt, temperature, job.seed_tag.clone());
        req.max_tokens = self.config.max_tokens;
        req
    }

    fn input(job: &StageJob, i: usize) -> Result<&RecordId, PipelineError> {
        job.input_ids
            .get(i)
            .ok_or_else(|| PipelineError::Precondition(format!("{} job is missing input {i}", job.stage)))
    }

    /// Checks gates and renders the prompt.
    fn prepare(&self, mut job: StageJob) -> Result<Prepared, PipelineError> {
        if job.seed_tag.is_empty() {
            job.seed_tag = job.work_key();
        }
        let prompt = match job.stage {
            Stage::S0Augment => {
                let category = job
                    .category
                    .ok_or_else(|| PipelineError::Precondition("augment job needs a category".into()))?;
                if job.input_ids.is_empty() {
                    return Err(PipelineError::Precondition(format!("no accepted seed norms for {}", category.as_str())));
                }
                let mut examples = Vec::new();
                for (i, id) in job.input_ids.iter().enumerate() {
                    let n = self.accepted_norm(id)?;
                    if n.category != category || n.culture != Culture::Chinese {
                        return Err(PipelineError::Precondition(format!("{id} is not a Chinese {} norm", category.as_str())));
                    }
                    examples.push(format!("{}. {}", i + 1, n.description));
                }
                let count = job.requested.unwrap_or(self.config.augment_count).to_string();
                render_prompt(
                    TemplateId::NormAugmentZh,
                    &bindings([
                        ("count", count),
                        ("category", category.display_name().to_string()),
                        ("examples", examples.join("\n")),
                    ]),
                )?
            }
            Stage::S0Transfer => {
                let n = self.accepted_norm(Self::input(&job, 0)?)?;
                if n.culture != Culture::Chinese {
                    return Err(PipelineError::Precondition(format!("{} is not a Chinese norm", n.id)));
                }
                render_prompt(
                    TemplateId::NormTransferEn,
                    &bindings([("category", n.category.display_name()), ("chinese_norm", n.description.as_str())]),
                )?
            }
            Stage::S1Scenarios => {
                let n = self.accepted_norm(Self::input(&job, 0)?)?;
                let count = job.requested.unwrap_or(self.config.scenarios_per_norm).to_string();
                render_prompt(
                    TemplateId::ScenarioGen,
                    &bindings([
                        ("count", count.as_str()),
                        ("society", n.culture.society()),
                        ("norm", n.description.as_str()),
                    ]),
                )?
            }
            Stage::S2Elaborate => {
                let n = self.accepted_norm(Self::input(&job, 0)?)?;
                let scenario_id = Self::input(&job, 1)?;
                let s = self
                    .store
                    .scenario(scenario_id)
                    .ok_or_else(|| PipelineError::Precondition(format!("no scenario {scenario_id}")))?;
                if s.norm_id != n.id {
                    return Err(PipelineError::Precondition(format!("scenario {} belongs to {}, not {}", s.id, s.norm_id, n.id)));
                }
                let polarity = job
                    .polarity
                    .ok_or_else(|| PipelineError::Precondition("elaboration job needs a polarity".into()))?;
                render_prompt(
                    TemplateId::SituationElaborate,
                    &bindings([
                        ("society", n.culture.society().to_string()),
                        ("polarity_instruction", polarity_instruction(Language::En, polarity).to_string()),
                        ("norm", n.description.clone()),
                        ("scenario", format!("{}; {}", s.setting, s.participants)),
                    ]),
                )?
            }
            Stage::S3Dialogue => {
                let sid = Self::input(&job, 0)?;
                let s = self.store.situation(sid).ok_or_else(|| PipelineError::Precondition(format!("no situation {sid}")))?;
                if !s.status.is_accepted() {
                    return Err(PipelineError::Precondition(format!("situation {sid} is {:?}", s.status.state)));
                }
                let n = self.accepted_norm(&s.norm_id)?;
                let language = n.culture.language();
                render_prompt(
                    TemplateId::dialogue_for(language),
                    &bindings([
                        ("polarity_instruction", polarity_instruction(language, s.polarity)),
                        ("norm", n.description.as_str()),
                        ("situation", s.text.as_str()),
                    ]),
                )?
            }
            Stage::S4Label => {
                let did = Self::input(&job, 0)?;
                let d = self.store.dialogue(did).ok_or_else(|| PipelineError::Precondition(format!("no dialogue {did}")))?;
                if !d.status.is_accepted() {
                    return Err(PipelineError::Precondition(format!("dialogue {did} is {:?}", d.status.state)));
                }
                let n = self.accepted_norm(&d.norm_id)?;
                let s = self
                    .store
                    .situation(&d.situation_id)
                    .ok_or_else(|| PipelineError::Precondition(format!("no situation {}", d.situation_id)))?;
                let text: Vec<String> = d.turns.iter().map(|t| format!("{}: {}", t.speaker, t.utterance)).collect();
                render_prompt(
                    TemplateId::TurnLabelCot,
                    &bindings([
                        ("norm", n.description.clone()),
                        ("situation", s.text.clone()),
                        ("dialogue", text.join("\n")),
                    ]),
                )?
            }
        };
        job.state = JobState::Running;
        job.error = None;
        let request = self.request(&job, prompt);
        Ok(Prepared { job, request })
    }

    fn finish(&self, mut job: StageJob, result: Result<RawCompletion, GatewayError>) -> JobOutcome {
        match result {
            Ok(raw) => self.commit_text(job, &raw.text),
            Err(e) => {
                job.state = match e {
                    GatewayError::ReplayMiss { .. } => JobState::Quarantined,
                    _ => JobState::Failed,
                };
                job.error = Some(e.to_string());
                self.save_job(job)
            }
        }
    }

    /// Parses a completion into records, stores them and opens their review tasks.
    fn commit_text(&self, mut job: StageJob, text: &str) -> JobOutcome {
        job.warnings.clear();
        let parsed = self.parse_outputs(&mut job, text);
        let (records, review) = match parsed {
            Ok(v) => v,
            Err(reason) => return self.quarantine(job, reason, text),
        };
        let ids = match self.store.append_all(records) {
            Ok(ids) => ids,
            Err(e) => return self.quarantine(job, e.to_string(), text),
        };
        job.state = JobState::Done;
        job.output_ids = ids.clone();
        job.error = None;
        job.raw_completion = None;
        let outcome = self.save_job(job);
        if let Some((kind, required)) = review {
            for id in &ids {
                if let Err(e) = self.desk.enqueue(id, kind, required) {
                    tracing::error!("enqueue {id}: {e}");
                }
            }
        }
        outcome
    }

    fn quarantine(&self, mut job: StageJob, reason: String, text: &str) -> JobOutcome {
        tracing::warn!(job = %job.id, stage = %job.stage, "quarantined: {reason}");
        job.state = JobState::Quarantined;
        job.error = Some(reason);
        job.output_ids.clear();
        job.raw_completion = Some(text.to_string());
        self.save_job(job)
    }

    fn save_job(&self, mut job: StageJob) -> JobOutcome {
        let result = if job.id.is_unassigned() {
            self.store.append(job.clone()).map(|id| job.id = id)
        } else {
            self.store.update(job.clone()).map(|_| ())
        };
        if let Err(e) = result {
            tracing::error!("saving {} job: {e}", job.stage);
            job.state = JobState::Failed;
            job.error = Some(format!("could not save job: {e}"));
        }
        JobOutcome::from(&job)
    }

    #[allow(clippy::type_complexity)]
    fn parse_outputs(
        &self,
        job: &mut StageJob,
        text: &str,
    ) -> Result<(Vec<Record>, Option<(ReviewKind, usize)>, ), String> {
        let reviewers = self.config.reviewers_per_item;
        let shortfall = |job: &mut StageJob, found: usize, what: &str| {
            if let Some(want) = job.requested {
                if found < want {
                    job.warnings.push(format!("parsed {found} of {want} {what}"));
                } else if found > want {
                    job.warnings.push(format!("parsed {found} {what}, kept {want}"));
                }
            }
        };
        match job.stage {
            Stage::S0Augment => {
                let category = job.category.ok_or("augment job has no category")?;
                let mut norms = parse_norm_list(text, Culture::Chinese, category).map_err(|e| e.to_string())?;
                shortfall(job, norms.len(), "norms");
                norms.truncate(job.requested.unwrap_or(norms.len()));
                let records = norms
                    .into_iter()
                    .map(|mut n| {
                        n.status = LifecycleStatus::under_review();
                        Record::Norm(n)
                    })
                    .collect();
                Ok((records, Some((ReviewKind::NormVerification, reviewers))))
            }
            Stage::S0Transfer => {
                let source = self.norm(&job.input_ids[0]).map_err(|e| e.to_string())?;
                let mut norms = parse_norm_list(text, Culture::American, source.category).map_err(|e| e.to_string())?;
                if norms.len() > 1 {
                    job.warnings.push(format!("parsed {} norms, kept the first", norms.len()));
                }
                let mut n = norms.swap_remove(0);
                n.source_norm_id = Some(source.id);
                n.status = LifecycleStatus::under_review();
                Ok((vec![Record::Norm(n)], Some((ReviewKind::NormVerification, reviewers))))
            }
            Stage::S1Scenarios => {
                let mut scenarios = parse_scenario_list(text, &job.input_ids[0]).map_err(|e| e.to_string())?;
                shortfall(job, scenarios.len(), "scenarios");
                scenarios.truncate(job.requested.unwrap_or(scenarios.len()));
                Ok((scenarios.into_iter().map(Record::Scenario).collect(), None))
            }
            Stage::S2Elaborate => {
                let body = parse_situation(text).map_err(|e| e.to_string())?;
                let situation = Situation {
                    id: RecordId::unassigned(),
                    norm_id: job.input_ids[0].clone(),
                    scenario_id: job.input_ids[1].clone(),
                    polarity: job.polarity.ok_or("elaboration job has no polarity")?,
                    text: body,
                    status: LifecycleStatus::under_review(),
                };
                Ok((vec![Record::Situation(situation)], Some((ReviewKind::SituationFaithfulness, reviewers))))
            }
            Stage::S3Dialogue => {
                let s = self.store.situation(&job.input_ids[0]).ok_or("situation vanished")?;
                let n = self.norm(&s.norm_id).map_err(|e| e.to_string())?;
                let language = n.culture.language();
                let turns = parse_dialogue(text, language).map_err(|e| e.to_string())?;
                let dialogue = Dialogue {
                    id: RecordId::unassigned(),
                    norm_id: n.id,
                    situation_id: s.id,
                    language,
                    turns,
                    status: LifecycleStatus::under_review(),
                };
                Ok((vec![Record::Dialogue(dialogue)], Some((ReviewKind::DialogueQuality, reviewers))))
            }
            Stage::S4Label => {
                let d = self.store.dialogue(&job.input_ids[0]).ok_or("dialogue vanished")?;
                let mut set = parse_turn_labels(text, &d).map_err(|e| e.to_string())?;
                set.status = LifecycleStatus::under_review();
                Ok((vec![Record::Annotation(set)], Some((ReviewKind::LabelVerification, self.config.label_reviewers))))
            }
        }
    }

    fn run_one(&self, job: StageJob) -> Result<JobOutcome, PipelineError> {
        if let Some(old) = self.store.jobs().into_iter().find(|j| j.work_key() == job.work_key()) {
            if old.state != JobState::Failed {
                return Err(PipelineError::Precondition(format!("{} job {} already exists ({:?})", old.stage, old.id, old.state)));
            }
        }
        // surface gate violations as errors instead of failed job records
        let p = self.prepare(job)?;
        let result = self.gateway.complete(&p.request);
        Ok(self.finish(p.job, result))
    }

    pub fn run_stage0_augment(&self, category: NormCategory, count: usize) -> Result<JobOutcome, PipelineError> {
        let seeds = self.accepted_seeds(category);
        if seeds.is_empty() {
            return Err(PipelineError::Precondition(format!("no accepted seed norms for {}", category.as_str())));
        }
        let mut job = StageJob::new(Stage::S0Augment, seeds.into_iter().map(|n| n.id).collect());
        job.category = Some(category);
        job.requested = Some(count);
        self.run_one(job)
    }

    pub fn run_stage0_transfer(&self, chinese_norm: &RecordId) -> Result<JobOutcome, PipelineError> {
        self.run_one(StageJob::new(Stage::S0Transfer, vec![chinese_norm.clone()]))
    }

    pub fn run_stage1_scenarios(&self, norm: &RecordId) -> Result<JobOutcome, PipelineError> {
        let mut job = StageJob::new(Stage::S1Scenarios, vec![norm.clone()]);
        job.requested = Some(self.config.scenarios_per_norm);
        self.run_one(job)
    }

    pub fn run_stage2_elaborate(&self, norm: &RecordId, scenario: &RecordId, polarity: Polarity) -> Result<JobOutcome, PipelineError> {
        let mut job = StageJob::new(Stage::S2Elaborate, vec![norm.clone(), scenario.clone()]);
        job.polarity = Some(polarity);
        self.run_one(job)
    }

    pub fn run_stage3_dialogue(&self, situation: &RecordId) -> Result<JobOutcome, PipelineError> {
        self.run_one(StageJob::new(Stage::S3Dialogue, vec![situation.clone()]))
    }

    pub fn run_stage4_label(&self, dialogue: &RecordId) -> Result<JobOutcome, PipelineError> {
        self.run_one(StageJob::new(Stage::S4Label, vec![dialogue.clone()]))
    }

    pub fn quarantined(&self) -> Vec<StageJob> {
        self.store.jobs().into_iter().filter(|j| j.state == JobState::Quarantined).collect()
    }

    fn quarantined_job(&self, id: &RecordId) -> Result<StageJob, PipelineError> {
        let job = self.store.job(id).ok_or_else(|| PipelineError::JobNotFound(id.clone()))?;
        if job.state != JobState::Quarantined {
            return Err(PipelineError::NotQuarantined(id.clone()));
        }
        Ok(job)
    }

    /// Re-runs a quarantined job, by default under a fresh seed tag so a new sample is drawn.
    pub fn retry_quarantined(&self, id: &RecordId, seed_tag: Option<String>) -> Result<JobOutcome, PipelineError> {
        let mut job = self.quarantined_job(id)?;
        job.seed_tag = seed_tag.unwrap_or_else(|| {
            let attempt = job.seed_tag.matches("#retry").count() + 1;
            format!("{}#retry{attempt}", job.work_key())
        });
        job.raw_completion = None;
        let p = self.prepare(job)?;
        let result = self.gateway.complete(&p.request);
        Ok(self.finish(p.job, result))
    }

    /// Treats `completion` as the model output for a quarantined job.
    pub fn edit_quarantined(&self, id: &RecordId, completion: &str) -> Result<JobOutcome, PipelineError> {
        let job = self.quarantined_job(id)?;
        let p = self.prepare(job)?;
        Ok(self.commit_text(p.job, completion))
    }
}
