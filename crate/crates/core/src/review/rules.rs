use std::collections::BTreeMap;

use thiserror::Error;

use super::model::*;
use crate::corpus::{ObservanceLabel, RecordId};
use crate::metrics::{aggregate_likert, majority_vote, Vote};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("{have} of {need} verdicts and no adjudication")]
    QuotaNotMet { have: usize, need: usize },
    #[error("verdict {0} does not match the task kind")]
    KindMismatch(RecordId),
    #[error("label verification needs the model labels")]
    MissingModelLabels,
    #[error("verdict {verdict} covers {found} turns, expected {expected}")]
    TurnCount { verdict: RecordId, expected: usize, found: usize },
}

/// Computes the aggregate for `task` from its verdicts. The result depends only on the verdict multiset.
pub fn aggregate(
    task: &ReviewTask,
    verdicts: &[Verdict],
    model_labels: Option<&[ObservanceLabel]>,
) -> Result<ReviewAggregate, RuleError> {
    for v in verdicts {
        if v.payload.kind() != task.kind {
            return Err(RuleError::KindMismatch(v.id.clone()));
        }
    }
    let regular: Vec<&Verdict> = verdicts.iter().filter(|v| !v.adjudication).collect();
    let adjudicator = verdicts.iter().filter(|v| v.adjudication).max_by_key(|v| (v.timestamp, v.id.as_str()));
    if adjudicator.is_none() && regular.len() < task.required_verdicts {
        return Err(RuleError::QuotaNotMet { have: regular.len(), need: task.required_verdicts });
    }
    // an adjudication verdict decides alone
    let deciding: Vec<&Verdict> = match adjudicator {
        Some(a) => vec![a],
        None => regular.clone(),
    };

    let mut out = ReviewAggregate {
        id: RecordId::unassigned(),
        task_id: task.id.clone(),
        decision: Decision::NeedsAdjudication,
        quality_means: None,
        vote_counts: BTreeMap::new(),
        gold_labels: None,
        edited_text: None,
    };
    match task.kind {
        ReviewKind::NormVerification => {
            let checks: Vec<&NormCheck> = deciding
                .iter()
                .filter_map(|v| match &v.payload {
                    VerdictPayload::NormVerification(c) => Some(c),
                    _ => None,
                })
                .collect();
            out.decision = norm_decision(&checks, &mut out.vote_counts);
            if out.decision == Decision::Accept {
                let mut edits: Vec<&str> = checks.iter().filter_map(|c| c.edited_text.as_deref()).collect();
                edits.sort_unstable();
                edits.dedup();
                match edits.as_slice() {
                    [] => {}
                    [one] => out.edited_text = Some(one.to_string()),
                    _ => out.decision = Decision::NeedsAdjudication,
                }
            }
        }
        ReviewKind::SituationFaithfulness => {
            let votes: Vec<bool> = deciding
                .iter()
                .filter_map(|v| match &v.payload {
                    VerdictPayload::SituationFaithfulness(c) => Some(c.entails),
                    _ => None,
                })
                .collect();
            count_bools(&mut out.vote_counts, "entails", &votes);
            out.decision = bool_decision(&votes);
        }
        ReviewKind::DialogueQuality => {
            let ratings: Vec<&QualityRating> = deciding
                .iter()
                .filter_map(|v| match &v.payload {
                    VerdictPayload::DialogueQuality(q) => Some(q),
                    _ => None,
                })
                .collect();
            let votes: Vec<bool> = ratings.iter().map(|q| q.on_topic).collect();
            count_bools(&mut out.vote_counts, "on_topic", &votes);
            out.decision = bool_decision(&votes);
            // means describe the raters, not the tie-breaker
            let source: Vec<&QualityRating> = if regular.is_empty() {
                ratings
            } else {
                regular
                    .iter()
                    .filter_map(|v| match &v.payload {
                        VerdictPayload::DialogueQuality(q) => Some(q),
                        _ => None,
                    })
                    .collect()
            };
            out.quality_means = quality_means(&source);
        }
        ReviewKind::LabelVerification => {
            let model = model_labels.ok_or(RuleError::MissingModelLabels)?;
            let mut per_verdict = Vec::with_capacity(deciding.len());
            for v in &deciding {
                let VerdictPayload::LabelVerification(check) = &v.payload else { continue };
                if check.turns.len() != model.len() {
                    return Err(RuleError::TurnCount {
                        verdict: v.id.clone(),
                        expected: model.len(),
                        found: check.turns.len(),
                    });
                }
                per_verdict.push(resolve_labels(model, check));
            }
            let mut gold = Vec::with_capacity(model.len());
            let mut agreed = true;
            for turn in 0..model.len() {
                let labels: Vec<ObservanceLabel> = per_verdict.iter().map(|l| l[turn]).collect();
                for l in &labels {
                    *out.vote_counts.entry(format!("turn_{turn}.{}", l.as_str())).or_default() += 1;
                }
                if labels.iter().all(|l| *l == labels[0]) && !labels.is_empty() {
                    gold.push(labels[0]);
                } else {
                    agreed = false;
                }
            }
            if agreed {
                out.decision = Decision::Accept;
                out.gold_labels = Some(gold);
            }
        }
    }
    Ok(out)
}

/// Labels an annotator ends up with after confirming or correcting the model.
pub fn resolve_labels(model: &[ObservanceLabel], check: &LabelCheck) -> Vec<ObservanceLabel> {
    model
        .iter()
        .zip(&check.turns)
        .map(|(&m, t)| match t {
            TurnCheck::Confirm => m,
            TurnCheck::Correct(l) => *l,
        })
        .collect()
}

fn norm_decision(checks: &[&NormCheck], counts: &mut BTreeMap<String, usize>) -> Decision {
    let mut decision = Decision::Accept;
    for i in 0..4 {
        let name = NormCheck::all(true).criteria()[i].0;
        let votes: Vec<bool> = checks.iter().map(|c| c.criteria()[i].1).collect();
        count_bools(counts, name, &votes);
        match majority_vote(&votes) {
            Vote::Winner(false) => decision = Decision::Reject,
            Vote::Tie if decision == Decision::Accept => decision = Decision::NeedsAdjudication,
            _ => {}
        }
    }
    decision
}

fn bool_decision(votes: &[bool]) -> Decision {
    match majority_vote(votes) {
        Vote::Winner(true) => Decision::Accept,
        Vote::Winner(false) => Decision::Reject,
        Vote::Tie => Decision::NeedsAdjudication,
    }
}

fn count_bools(counts: &mut BTreeMap<String, usize>, name: &str, votes: &[bool]) {
    let yes = votes.iter().filter(|v| **v).count();
    counts.insert(format!("{name}.yes"), yes);
    counts.insert(format!("{name}.no"), votes.len() - yes);
}

fn quality_means(ratings: &[&QualityRating]) -> Option<QualityMeans> {
    let mean = |f: fn(&QualityRating) -> u8| {
        let scores: Vec<u8> = ratings.iter().map(|q| f(q)).collect();
        aggregate_likert(&scores).ok()
    };
    Some(QualityMeans {
        naturalness: mean(|q| q.naturalness)?,
        nativeness: mean(|q| q.nativeness)?,
        coherence: mean(|q| q.coherence)?,
        interestingness: mean(|q| q.interestingness)?,
    })
}
