use std::collections::BTreeMap;

use serde::Serialize;

use super::store::Store;
use super::types::{Culture, NormCategory, Polarity};

/// Counts over accepted dialogues. Category, culture and polarity come from each
/// dialogue's norm and situation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub dialogue_count: usize,
    pub turn_count: usize,
    pub per_category: BTreeMap<NormCategory, usize>,
    pub per_culture: BTreeMap<Culture, usize>,
    pub per_polarity: BTreeMap<Polarity, usize>,
}

impl CorpusStats {
    pub fn mean_turns(&self) -> Option<f64> {
        (self.dialogue_count > 0).then(|| self.turn_count as f64 / self.dialogue_count as f64)
    }
}

pub fn corpus_stats(store: &Store) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for d in store.dialogues().into_iter().filter(|d| d.status.is_accepted()) {
        stats.dialogue_count += 1;
        stats.turn_count += d.turns.len();
        if let Some(n) = store.norm(&d.norm_id) {
            *stats.per_category.entry(n.category).or_default() += 1;
            *stats.per_culture.entry(n.culture).or_default() += 1;
        }
        if let Some(s) = store.situation(&d.situation_id) {
            *stats.per_polarity.entry(s.polarity).or_default() += 1;
        }
    }
    stats
}
