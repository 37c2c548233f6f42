//! Report assembly. Every report has a text and a JSON rendering of the same values.

use std::collections::HashMap;
use std::fmt::Write;
use std::path::Path;

use normloom::corpus::{corpus_stats, AnnotationSource, CorpusStats, Language, RecordId, Store, TurnAnnotationSet};
use normloom::metrics::{
    diversity_rows, lda_fit, lda_top_tokens, score_predictions, segment, DiversityRow, GenerationMode, LabelReport,
    LdaParams, MetricError, TokenSequence,
};
use normloom::pipeline::read_baseline;
use normloom::review::{AgreementReport, ReviewDesk};
use serde::Serialize;

use crate::args::ReportKind;
use crate::CliError;

/// Diversity is computed for n = 1..=4.
const ORDERS: std::ops::RangeInclusive<usize> = 1..=4;

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub languages: Vec<Language>,
    pub topics: usize,
    pub top: usize,
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicTable {
    pub language: Language,
    pub documents: usize,
    pub top_tokens: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "report", rename_all = "snake_case")]
pub enum Report {
    Diversity { rows: Vec<DiversityRow> },
    Topics { tables: Vec<TopicTable> },
    Agreement { questions: Vec<AgreementReport> },
    Detection(LabelReport),
    Stats { stats: CorpusStats, mean_turns: Option<f64> },
    Empty { notice: String },
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_owned(), |x| format!("{x:.4}"))
}

impl Report {
    pub fn is_empty(&self) -> bool {
        matches!(self, Report::Empty { .. })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self {
            Report::Empty { notice } => {
                let _ = writeln!(out, "{notice}");
            }
            Report::Diversity { rows } => {
                let _ = writeln!(out, "{:<6}{:<8}{:>3}{:>10}", "lang", "mode", "n", "distinct");
                for r in rows {
                    let _ = writeln!(out, "{:<6}{:<8}{:>3}{:>10.4}", r.language.as_str(), r.mode.as_str(), r.n, r.ratio);
                }
            }
            Report::Topics { tables } => {
                for t in tables {
                    let _ = writeln!(out, "[{}] documents={} topics={}", t.language.as_str(), t.documents, t.top_tokens.len());
                    for (k, tokens) in t.top_tokens.iter().enumerate() {
                        let _ = writeln!(out, "topic {k:>2}: {}", tokens.join(" "));
                    }
                }
            }
            Report::Agreement { questions } => {
                for q in questions {
                    let _ = writeln!(out, "[{} / {}] raters={}", q.kind.as_str(), q.question, q.raters);
                    for s in &q.strata {
                        let stratum = serde_json::to_value(s.stratum).expect("stratum serializes");
                        let _ = write!(out, "{:<10}{:>8}{:>11}", stratum.as_str().unwrap_or(""), s.support, cell(s.kappa));
                        match &s.note {
                            Some(note) => {
                                let _ = writeln!(out, "  ({note})");
                            }
                            None => out.push('\n'),
                        }
                    }
                }
            }
            Report::Detection(report) => out = report.to_text(),
            Report::Stats { stats, mean_turns } => {
                let _ = writeln!(out, "dialogues {}", stats.dialogue_count);
                let _ = writeln!(out, "turns {}", stats.turn_count);
                let _ = writeln!(out, "mean_turns {}", cell(*mean_turns));
                for (k, v) in &stats.per_culture {
                    let _ = writeln!(out, "culture {} {v}", json_key(k));
                }
                for (k, v) in &stats.per_category {
                    let _ = writeln!(out, "category {} {v}", k.as_str());
                }
                for (k, v) in &stats.per_polarity {
                    let _ = writeln!(out, "polarity {} {v}", k.as_str());
                }
            }
        }
        out
    }
}

fn json_key<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

fn empty(what: &str) -> Report {
    Report::Empty { notice: format!("no {what} in the store; nothing to report") }
}

/// One token sequence per utterance, so n-grams never span turns or speakers.
fn utterance_sequences<'a>(utterances: impl Iterator<Item = &'a str>, language: Language) -> Vec<TokenSequence> {
    utterances.map(|u| segment(u, language)).filter(|s| !s.is_empty()).collect()
}

pub fn diversity(store: &Store, baseline: &Path, opts: &ReportOptions) -> Result<Report, CliError> {
    let simple = if baseline.exists() { read_baseline(baseline)? } else { Vec::new() };
    let dialogues = store.dialogues();
    let mut rows = Vec::new();
    for &lang in &opts.languages {
        let simple_docs = utterance_sequences(
            simple.iter().filter(|d| d.language == lang).flat_map(|d| d.turns.iter().map(|t| t.utterance.as_str())),
            lang,
        );
        let cot_docs = utterance_sequences(
            dialogues.iter().filter(|d| d.language == lang).flat_map(|d| d.turns.iter().map(|t| t.utterance.as_str())),
            lang,
        );
        rows.extend(diversity_rows(&simple_docs, lang, GenerationMode::Simple, ORDERS));
        rows.extend(diversity_rows(&cot_docs, lang, GenerationMode::Cot, ORDERS));
    }
    Ok(if rows.is_empty() { empty("dialogues") } else { Report::Diversity { rows } })
}

/// Situations are grouped by their norm's culture and segmented as English text.
pub fn topics(store: &Store, opts: &ReportOptions) -> Result<Report, CliError> {
    let norms: HashMap<RecordId, Language> = store.norms().into_iter().map(|n| (n.id, n.culture.language())).collect();
    let situations = store.situations();
    let mut tables = Vec::new();
    for &lang in &opts.languages {
        let docs: Vec<TokenSequence> = situations
            .iter()
            .filter(|s| norms.get(&s.norm_id) == Some(&lang))
            .map(|s| segment(&s.text, Language::En))
            .filter(|d| !d.is_empty())
            .collect();
        if docs.is_empty() {
            continue;
        }
        let mut params = LdaParams::new(opts.topics, opts.seed);
        params.iterations = opts.iterations;
        let model = lda_fit(&docs, &params)?;
        tables.push(TopicTable { language: lang, documents: docs.len(), top_tokens: lda_top_tokens(&model, opts.top) });
    }
    Ok(if tables.is_empty() { empty("situations") } else { Report::Topics { tables } })
}

pub fn agreement(desk: &ReviewDesk) -> Report {
    let questions = desk.export_gold().agreement;
    if questions.is_empty() {
        empty("multiply-judged review tasks")
    } else {
        Report::Agreement { questions }
    }
}

/// Gold label sets against the latest model labels of the same dialogues.
pub fn detection(store: &Store, opts: &ReportOptions) -> Result<Report, CliError> {
    let languages: HashMap<RecordId, Language> = store.dialogues().into_iter().map(|d| (d.id, d.language)).collect();
    let wanted = |a: &TurnAnnotationSet| languages.get(&a.dialogue_id).is_some_and(|l| opts.languages.contains(l));
    let annotations = store.annotations();
    let gold: Vec<TurnAnnotationSet> = annotations
        .iter()
        .filter(|a| a.source == AnnotationSource::Gold && a.status.is_accepted() && wanted(a))
        .cloned()
        .collect();
    if gold.is_empty() {
        return Ok(empty("gold label sets"));
    }
    let mut latest: HashMap<&RecordId, &TurnAnnotationSet> = HashMap::new();
    for a in annotations.iter().filter(|a| a.source == AnnotationSource::Model) {
        latest.insert(&a.dialogue_id, a);
    }
    let pred: Vec<TurnAnnotationSet> = gold
        .iter()
        .map(|g| {
            latest
                .get(&g.dialogue_id)
                .map(|a| (*a).clone())
                .ok_or_else(|| MetricError::KeyMismatch(format!("no model labels for dialogue {}", g.dialogue_id)))
        })
        .collect::<Result<_, _>>()?;
    Ok(Report::Detection(score_predictions(&gold, &pred, |id| languages.get(id).copied())?))
}

pub fn stats(store: &Store) -> Report {
    let stats = corpus_stats(store);
    if stats.dialogue_count == 0 {
        return empty("accepted dialogues");
    }
    let mean_turns = stats.mean_turns();
    Report::Stats { stats, mean_turns }
}

pub fn build(kind: ReportKind, desk: &ReviewDesk, baseline: &Path, opts: &ReportOptions) -> Result<Report, CliError> {
    let store = desk.store();
    match kind {
        ReportKind::Diversity => diversity(store, baseline, opts),
        ReportKind::Topics => topics(store, opts),
        ReportKind::Agreement => Ok(agreement(desk)),
        ReportKind::Detection => detection(store, opts),
        ReportKind::Stats => Ok(stats(store)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use normloom::corpus::{LifecycleStatus, ObservanceLabel, TurnLabel};
    use normloom::metrics::score_predictions;

    fn labels(dialogue: &str, source: AnnotationSource, l: &[ObservanceLabel]) -> TurnAnnotationSet {
        TurnAnnotationSet {
            id: RecordId::unassigned(),
            dialogue_id: dialogue.into(),
            norm_action: "greet".into(),
            norm_actors: vec![],
            labels: l
                .iter()
                .enumerate()
                .map(|(i, &label)| TurnLabel { turn_index: i, label, explanation: "-".into() })
                .collect(),
            source,
            status: LifecycleStatus::draft(),
        }
    }

    #[test]
    fn detection_on_identical_labels_is_all_ones() {
        use ObservanceLabel::*;
        let gold = vec![
            labels("d1", AnnotationSource::Gold, &[Adhered, NotRelevant, Violated]),
            labels("d2", AnnotationSource::Gold, &[Violated, Adhered]),
        ];
        let report = Report::Detection(score_predictions(&gold, &gold, |_| Some(Language::Zh)).unwrap());
        let text = report.to_text();
        let Report::Detection(inner) = &report else { unreachable!() };
        for row in &inner.block(Language::Zh).unwrap().rows {
            assert_eq!((row.precision, row.recall, row.f1), (Some(1.0), Some(1.0), Some(1.0)));
        }
        assert_eq!(text.matches("1.0000").count(), 9);
    }

    #[test]
    fn empty_reports_say_so() {
        let r = empty("situations");
        assert!(r.is_empty());
        assert!(r.to_text().contains("no situations"));
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["report"], "empty");
    }
}
