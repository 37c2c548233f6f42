//! Expert seed loading.

use std::collections::HashSet;

use normloom::corpus::{
    validate_record, Culture, LifecycleState, LifecycleStatus, NormCategory, NormOrigin, Record, RecordId, SocialNorm,
    Store, StoreError,
};
use normloom::llm::verbal_evidence;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeedError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("no norms in seed file")]
    Empty,
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// One line of a seed file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeedLine {
    culture: Culture,
    category: NormCategory,
    description: String,
    /// Derived from quoted spans in the description when absent.
    #[serde(default)]
    verbal_evidence: Option<Vec<String>>,
}

/// Parses and validates every line. Blank lines are skipped.
pub fn parse_seed_file(text: &str) -> Result<Vec<SocialNorm>, SeedError> {
    let mut norms = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: SeedLine =
            serde_json::from_str(raw).map_err(|e| SeedError::Line { line, message: e.to_string() })?;
        let norm = SocialNorm {
            id: RecordId::unassigned(),
            culture: parsed.culture,
            category: parsed.category,
            verbal_evidence: parsed.verbal_evidence.unwrap_or_else(|| verbal_evidence(&parsed.description)),
            description: parsed.description,
            origin: NormOrigin::ExpertSeed,
            source_norm_id: None,
            status: LifecycleStatus { state: LifecycleState::Accepted, decided_by: None },
        };
        let report = validate_record(&Record::Norm(norm.clone()));
        if !report.is_valid() {
            return Err(SeedError::Line { line, message: report.to_string() });
        }
        norms.push(norm);
    }
    if norms.is_empty() {
        return Err(SeedError::Empty);
    }
    Ok(norms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedOutcome {
    pub added: usize,
    /// Seeds already in the store with the same culture, category and description.
    pub skipped: usize,
}

/// Appends the norms not already present, in one atomic commit.
pub fn load_seeds(store: &Store, norms: Vec<SocialNorm>) -> Result<SeedOutcome, SeedError> {
    let key = |n: &SocialNorm| (n.culture, n.category, n.description.trim().to_string());
    let mut present: HashSet<_> = store.norms().iter().filter(|n| n.origin == NormOrigin::ExpertSeed).map(key).collect();
    let total = norms.len();
    let fresh: Vec<Record> = norms.into_iter().filter(|n| present.insert(key(n))).map(Record::Norm).collect();
    let added = fresh.len();
    if added > 0 {
        store.append_all(fresh)?;
    }
    Ok(SeedOutcome { added, skipped: total - added })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIVE: &str = r#"{"culture":"chinese","category":"apology","description":"打扰别人时要说“不好意思”。"}
{"culture":"chinese","category":"greeting","description":"见到长辈要说“您好”。"}

{"culture":"american","category":"giving_thanks","description":"Say \"thank you\" when someone holds the door."}
{"culture":"chinese","category":"leave","description":"送客时主人要说“慢走”。","verbal_evidence":["慢走"]}
{"culture":"american","category":"request","description":"Open a request with \"could you\" rather than an imperative."}
"#;

    #[test]
    fn five_valid_lines_load_as_accepted_seeds() {
        let store = Store::in_memory();
        let norms = parse_seed_file(FIVE).unwrap();
        assert_eq!(norms[0].verbal_evidence, vec!["不好意思"]);
        assert_eq!(load_seeds(&store, norms).unwrap(), SeedOutcome { added: 5, skipped: 0 });
        let stored = store.norms();
        assert_eq!(stored.len(), 5);
        assert!(stored.iter().all(|n| n.status.is_accepted() && n.origin == NormOrigin::ExpertSeed));
    }

    #[test]
    fn reloading_is_a_no_op() {
        let store = Store::in_memory();
        load_seeds(&store, parse_seed_file(FIVE).unwrap()).unwrap();
        assert_eq!(load_seeds(&store, parse_seed_file(FIVE).unwrap()).unwrap(), SeedOutcome { added: 0, skipped: 5 });
        assert_eq!(store.norms().len(), 5);
    }

    #[test]
    fn bad_line_is_named() {
        let text = FIVE.replacen("\"greeting\"", "\"smalltalk\"", 1);
        match parse_seed_file(&text) {
            Err(SeedError::Line { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        let text = FIVE.replacen("打扰别人时要说“不好意思”。", " ", 1);
        assert!(matches!(parse_seed_file(&text), Err(SeedError::Line { line: 1, .. })));
        assert!(matches!(parse_seed_file("\n\n"), Err(SeedError::Empty)));
    }

    #[test]
    fn fifty_seeds_across_ten_categories() {
        let text: String = NormCategory::ALL
            .iter()
            .flat_map(|c| {
                (0..5).map(move |i| {
                    format!("{{\"culture\":\"chinese\",\"category\":\"{}\",\"description\":\"第{i}条：在{}场合要说“请”。\"}}\n", c.as_str(), c.display_name())
                })
            })
            .collect();
        let store = Store::in_memory();
        assert_eq!(load_seeds(&store, parse_seed_file(&text).unwrap()).unwrap().added, 50);
        assert_eq!(store.norms().iter().filter(|n| n.status.is_accepted()).count(), 50);
    }
}
