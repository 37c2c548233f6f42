//! Full-store checks that generated records only descend from accepted ones.

use std::collections::HashMap;

use super::job::{JobState, Stage, StageJob};
use crate::corpus::{AnnotationSource, NormOrigin, RecordId, SocialNorm, Store};

/// Problems with gate soundness and provenance. Empty means the store is clean.
pub fn lineage_audit(store: &Store) -> Vec<String> {
    let mut problems = Vec::new();
    let norms: HashMap<RecordId, SocialNorm> = store.norms().into_iter().map(|n| (n.id.clone(), n)).collect();
    let jobs = store.jobs();
    let mut producers: HashMap<&RecordId, Vec<&StageJob>> = HashMap::new();
    for j in jobs.iter().filter(|j| j.state == JobState::Done) {
        for o in &j.output_ids {
            producers.entry(o).or_default().push(j);
        }
    }
    let accepted_norm = |id: &RecordId| norms.get(id).is_some_and(|n| n.status.is_accepted());
    let mut produced_once = |id: &RecordId, what: &str| match producers.get(id).map_or(0, Vec::len) {
        1 => {}
        n => problems.push(format!("{what} {id} is the output of {n} jobs")),
    };

    for n in norms.values().filter(|n| n.origin != NormOrigin::ExpertSeed) {
        produced_once(&n.id, "norm");
    }
    for s in store.scenarios() {
        produced_once(&s.id, "scenario");
    }
    for s in store.situations() {
        produced_once(&s.id, "situation");
    }
    for d in store.dialogues() {
        produced_once(&d.id, "dialogue");
    }
    let annotations = store.annotations();
    for a in annotations.iter().filter(|a| a.source == AnnotationSource::Model) {
        produced_once(&a.id, "annotation");
    }

    for j in jobs.iter().filter(|j| j.state == JobState::Done) {
        let inputs_ok = match j.stage {
            Stage::S0Augment | Stage::S0Transfer | Stage::S1Scenarios => j.input_ids.iter().all(&accepted_norm),
            Stage::S2Elaborate => j.input_ids.first().is_some_and(&accepted_norm),
            Stage::S3Dialogue => j.input_ids.iter().all(|i| store.situation(i).is_some_and(|s| s.status.is_accepted())),
            Stage::S4Label => j.input_ids.iter().all(|i| store.dialogue(i).is_some_and(|d| d.status.is_accepted())),
        };
        if !inputs_ok {
            problems.push(format!("{} job {} consumed a record that is not accepted", j.stage, j.id));
        }
    }
    for s in store.situations() {
        if !accepted_norm(&s.norm_id) {
            problems.push(format!("situation {} descends from unaccepted norm {}", s.id, s.norm_id));
        }
    }
    for d in store.dialogues() {
        if !store.situation(&d.situation_id).is_some_and(|s| s.status.is_accepted()) {
            problems.push(format!("dialogue {} descends from unaccepted situation {}", d.id, d.situation_id));
        }
    }
    for a in &annotations {
        let dialogue_ok = store.dialogue(&a.dialogue_id).is_some_and(|d| d.status.is_accepted());
        if !dialogue_ok {
            problems.push(format!("annotation {} labels unaccepted dialogue {}", a.id, a.dialogue_id));
        }
    }

    // every norm must trace back to an expert seed
    let augment_inputs: HashMap<&RecordId, &Vec<RecordId>> = jobs
        .iter()
        .filter(|j| j.stage == Stage::S0Augment && j.state == JobState::Done)
        .flat_map(|j| j.output_ids.iter().map(move |o| (o, &j.input_ids)))
        .collect();
    for n in norms.values() {
        let mut cur = n;
        let mut hops = 0;
        let rooted = loop {
            if cur.origin == NormOrigin::ExpertSeed {
                break true;
            }
            let parent = match cur.origin {
                NormOrigin::Transferred => cur.source_norm_id.as_ref(),
                _ => augment_inputs.get(&cur.id).and_then(|ins| ins.first()),
            };
            match parent.and_then(|p| norms.get(p)) {
                Some(p) if hops < norms.len() => {
                    cur = p;
                    hops += 1;
                }
                _ => break false,
            }
        };
        if !rooted {
            problems.push(format!("norm {} does not trace back to an expert seed", n.id));
        }
    }
    problems.sort();
    problems
}
