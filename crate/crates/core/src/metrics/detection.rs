use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::corpus::{Language, ObservanceLabel, RecordId, TurnAnnotationSet};

/// One scored turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TurnPair {
    pub language: Language,
    pub gold: ObservanceLabel,
    pub predicted: ObservanceLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub label: ObservanceLabel,
    /// Turns whose gold label is this label.
    pub support: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// `None` when nothing was predicted with this label.
    pub precision: Option<f64>,
    /// `None` when support is zero.
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl LabelRow {
    fn from_counts(label: ObservanceLabel, tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        Self {
            label,
            support: tp + fn_,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelBlock {
    pub language: Language,
    pub turns: usize,
    pub rows: Vec<LabelRow>,
}

impl LabelBlock {
    pub fn row(&self, label: ObservanceLabel) -> &LabelRow {
        self.rows.iter().find(|r| r.label == label).expect("every label has a row")
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelReport {
    pub blocks: Vec<LabelBlock>,
}

impl LabelReport {
    pub fn block(&self, language: Language) -> Option<&LabelBlock> {
        self.blocks.iter().find(|b| b.language == language)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width table: one block per language, one row per label.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let cell = |v: Option<f64>| v.map_or_else(|| "undefined".to_owned(), |x| format!("{x:.4}"));
        for block in &self.blocks {
            let _ = writeln!(out, "[{}] turns={}", block.language.as_str(), block.turns);
            let _ = writeln!(out, "{:<14}{:>11}{:>11}{:>11}{:>9}", "label", "precision", "recall", "f1", "support");
            for r in &block.rows {
                let _ = writeln!(
                    out,
                    "{:<14}{:>11}{:>11}{:>11}{:>9}",
                    r.label.display_name(),
                    cell(r.precision),
                    cell(r.recall),
                    cell(r.f1),
                    r.support
                );
            }
        }
        out
    }
}

/// One-vs-rest scoring per label, one block per language present.
pub fn score_turns(pairs: &[TurnPair]) -> LabelReport {
    let mut by_lang: BTreeMap<&str, (Language, Vec<&TurnPair>)> = BTreeMap::new();
    for p in pairs {
        by_lang.entry(p.language.as_str()).or_insert((p.language, Vec::new())).1.push(p);
    }
    let blocks = by_lang
        .into_values()
        .map(|(language, turns)| {
            let rows = ObservanceLabel::ALL
                .iter()
                .map(|&label| {
                    let tp = turns.iter().filter(|t| t.gold == label && t.predicted == label).count();
                    let fp = turns.iter().filter(|t| t.gold != label && t.predicted == label).count();
                    let fn_ = turns.iter().filter(|t| t.gold == label && t.predicted != label).count();
                    LabelRow::from_counts(label, tp, fp, fn_)
                })
                .collect();
            LabelBlock { language, turns: turns.len(), rows }
        })
        .collect();
    LabelReport { blocks }
}

/// Aligns gold and predicted sets by dialogue and turn, then scores.
pub fn score_predictions(
    gold: &[TurnAnnotationSet],
    pred: &[TurnAnnotationSet],
    language_of: impl Fn(&RecordId) -> Option<Language>,
) -> Result<LabelReport, MetricError> {
    let index = |sets: &[TurnAnnotationSet]| -> Result<HashMap<(RecordId, usize), ObservanceLabel>, MetricError> {
        let mut map = HashMap::new();
        for set in sets {
            for l in &set.labels {
                if map.insert((set.dialogue_id.clone(), l.turn_index), l.label).is_some() {
                    return Err(MetricError::KeyMismatch(format!(
                        "duplicate key {} turn {}",
                        set.dialogue_id, l.turn_index
                    )));
                }
            }
        }
        Ok(map)
    };
    let gold_map = index(gold)?;
    let pred_map = index(pred)?;
    if gold_map.len() != pred_map.len() {
        return Err(MetricError::KeyMismatch(format!(
            "{} gold turns vs {} predicted turns",
            gold_map.len(),
            pred_map.len()
        )));
    }
    let mut keys: Vec<_> = gold_map.keys().collect();
    keys.sort();
    let mut pairs = Vec::with_capacity(keys.len());
    for key in keys {
        let predicted = *pred_map.get(key).ok_or_else(|| {
            MetricError::KeyMismatch(format!("no prediction for {} turn {}", key.0, key.1))
        })?;
        let language = language_of(&key.0).ok_or_else(|| MetricError::UnknownDialogue(key.0.to_string()))?;
        pairs.push(TurnPair { language, gold: gold_map[key], predicted });
    }
    Ok(score_turns(&pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnnotationSource, LifecycleStatus, TurnLabel};
    use proptest::prelude::*;
    use ObservanceLabel::*;

    fn pairs(gold: &[ObservanceLabel], pred: &[ObservanceLabel]) -> Vec<TurnPair> {
        gold.iter()
            .zip(pred)
            .map(|(&gold, &predicted)| TurnPair { language: Language::En, gold, predicted })
            .collect()
    }

    fn set(dialogue: &str, labels: &[ObservanceLabel], source: AnnotationSource) -> TurnAnnotationSet {
        TurnAnnotationSet {
            id: RecordId::unassigned(),
            dialogue_id: dialogue.into(),
            norm_action: "apologize".into(),
            norm_actors: vec![],
            labels: labels
                .iter()
                .enumerate()
                .map(|(i, &label)| TurnLabel { turn_index: i, label, explanation: String::new() })
                .collect(),
            source,
            status: LifecycleStatus::draft(),
        }
    }

    #[test]
    fn exact_predictions_score_one() {
        let g = [Adhered, Violated, NotRelevant, Adhered];
        let r = score_turns(&pairs(&g, &g));
        for row in &r.blocks[0].rows {
            assert_eq!((row.precision, row.recall, row.f1), (Some(1.0), Some(1.0), Some(1.0)));
        }
    }

    #[test]
    fn eight_of_ten_adhered() {
        let gold = [Adhered; 10];
        let mut pred = [Adhered; 10];
        pred[8] = Violated;
        pred[9] = Violated;
        let r = score_turns(&pairs(&gold, &pred));
        let b = &r.blocks[0];
        assert_eq!(b.row(Adhered).precision, Some(1.0));
        assert_eq!(b.row(Adhered).recall, Some(0.8));
        assert_eq!(b.row(Violated).precision, Some(0.0));
        assert_eq!(b.row(Violated).support, 0);
        assert_eq!(b.row(Violated).recall, None);
        assert_eq!(b.row(NotRelevant).precision, None);
    }

    #[test]
    fn languages_are_stratified() {
        let mut p = pairs(&[Adhered], &[Adhered]);
        p.push(TurnPair { language: Language::Zh, gold: Violated, predicted: Adhered });
        let r = score_turns(&p);
        assert_eq!(r.blocks.len(), 2);
        assert_eq!(r.block(Language::Zh).unwrap().row(Adhered).precision, Some(0.0));
        assert_eq!(r.block(Language::En).unwrap().row(Adhered).precision, Some(1.0));
    }

    #[test]
    fn alignment_by_dialogue_and_turn() {
        let gold = vec![set("d1", &[Adhered, Violated], AnnotationSource::Gold)];
        let pred = vec![set("d1", &[Adhered, Adhered], AnnotationSource::Model)];
        let r = score_predictions(&gold, &pred, |_| Some(Language::Zh)).unwrap();
        assert_eq!(r.blocks[0].row(Adhered).precision, Some(0.5));

        let short = vec![set("d1", &[Adhered], AnnotationSource::Model)];
        assert!(matches!(score_predictions(&gold, &short, |_| Some(Language::Zh)), Err(MetricError::KeyMismatch(_))));
        let other = vec![set("d2", &[Adhered, Adhered], AnnotationSource::Model)];
        assert!(matches!(score_predictions(&gold, &other, |_| Some(Language::Zh)), Err(MetricError::KeyMismatch(_))));
    }

    #[test]
    fn text_and_json_carry_the_same_numbers() {
        let r = score_turns(&pairs(&[Adhered, Adhered, Violated], &[Adhered, Violated, Violated]));
        let text = r.to_text();
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for row in json["blocks"][0]["rows"].as_array().unwrap() {
            for key in ["precision", "recall", "f1"] {
                if let Some(v) = row[key].as_f64() {
                    assert!(text.contains(&format!("{v:.4}")), "{key}={v} missing from\n{text}");
                }
            }
        }
        assert!(text.contains("undefined"));
    }

    fn label() -> impl Strategy<Value = ObservanceLabel> {
        prop_oneof![Just(Adhered), Just(Violated), Just(NotRelevant)]
    }

    proptest! {
        #[test]
        fn counts_agree_with_brute_force(turns in proptest::collection::vec((label(), label()), 1..60)) {
            let p: Vec<TurnPair> = turns.iter().map(|&(gold, predicted)| TurnPair { language: Language::En, gold, predicted }).collect();
            let r = score_turns(&p);
            let b = &r.blocks[0];
            let correct = turns.iter().filter(|(g, q)| g == q).count();
            let tp_sum: usize = b.rows.iter().map(|r| r.true_positives).sum();
            prop_assert_eq!(tp_sum, correct);
            let weighted: f64 = b.rows.iter().map(|r| r.recall.unwrap_or(0.0) * r.support as f64).sum::<f64>() / turns.len() as f64;
            prop_assert!((weighted - correct as f64 / turns.len() as f64).abs() < 1e-9);
            for row in &b.rows {
                for v in [row.precision, row.recall, row.f1].into_iter().flatten() {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
