use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{MetricError, TokenSequence};
use crate::corpus::Language;

/// Unique n-grams over total n-grams, pooled across the whole corpus.
pub fn distinct_n(corpus: &[TokenSequence], n: usize) -> Result<f64, MetricError> {
    if n == 0 {
        return Err(MetricError::ZeroOrder);
    }
    let mut unique: HashSet<&[String]> = HashSet::new();
    let mut total = 0usize;
    for seq in corpus {
        for gram in seq.tokens.windows(n) {
            unique.insert(gram);
            total += 1;
        }
    }
    if total == 0 {
        return Err(MetricError::NoNgrams { n });
    }
    Ok(unique.len() as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    Simple,
    Cot,
}

impl GenerationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GenerationMode::Simple => "simple",
            GenerationMode::Cot => "cot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityRow {
    pub language: Language,
    pub mode: GenerationMode,
    pub n: usize,
    pub ratio: f64,
}

/// Rows for n in `orders`. Orders with no n-grams are skipped.
pub fn diversity_rows(
    corpus: &[TokenSequence],
    language: Language,
    mode: GenerationMode,
    orders: impl IntoIterator<Item = usize>,
) -> Vec<DiversityRow> {
    orders
        .into_iter()
        .filter_map(|n| distinct_n(corpus, n).ok().map(|ratio| DiversityRow { language, mode, n, ratio }))
        .collect()
}
