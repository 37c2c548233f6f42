//! Domain records, their invariants, and the append-only store they live in.

mod record;
mod stats;
mod store;
mod types;
mod validate;

pub use record::Record;
pub use stats::{corpus_stats, CorpusStats};
pub use store::{decode_line, encode_line, Store, StoreError};
pub use types::*;
pub use validate::{
    validate_in_context, validate_json, validate_record, Lookup, ValidationError, ValidationReport,
    Violation, ViolationKind, MAX_NORM_ACTION_WORDS,
};

use std::time::{SystemTime, UNIX_EPOCH};

/// Source of timestamps, swappable so replayed runs produce identical stores.
pub trait Clock: Send + Sync {
    fn now_millis(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_millis(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub u64);

impl Clock for FixedClock {
    fn now_millis(&self) -> u64 {
        self.0
    }
}
