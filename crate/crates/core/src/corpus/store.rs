//! Append-only, versioned record store.
//!
//! One JSON-Lines file per record kind (review tasks, verdicts and aggregates share
//! `reviews.jsonl`). Every line carries `kind` and `version`; an update is a new line with
//! the same id and the next version, and reads see the latest version. Writes serialize
//! through a single lock; reads share it.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::record::Record;
use super::types::*;
use super::validate::{validate_in_context, Lookup, ValidationReport};
use crate::pipeline::StageJob;
use crate::review::{ReviewAggregate, ReviewTask, Verdict};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{kind} {id} already exists")]
    DuplicateId { kind: RecordKind, id: RecordId },
    #[error("{kind} {id} not found")]
    NotFound { kind: RecordKind, id: RecordId },
    #[error("referential integrity: {0}")]
    DanglingReference(ValidationReport),
    #[error("invalid record: {0}")]
    Invalid(ValidationReport),
    #[error("illegal lifecycle transition {from:?} -> {to:?} for {id}")]
    IllegalTransition {
        id: RecordId,
        from: LifecycleState,
        to: LifecycleState,
    },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("batch record {index}: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<StoreError>,
    },
    #[error("storage I/O: {0}")]
    Io(#[from] io::Error),
}

#[derive(Default)]
struct KindTable {
    order: Vec<RecordId>,
    versions: HashMap<RecordId, Vec<Record>>,
}

#[derive(Default)]
struct Inner {
    tables: HashMap<RecordKind, KindTable>,
    counters: HashMap<RecordKind, u64>,
    files: HashMap<&'static str, File>,
}

impl Lookup for Inner {
    fn find(&self, kind: RecordKind, id: &RecordId) -> Option<&Record> {
        self.tables.get(&kind)?.versions.get(id)?.last()
    }
}

impl Inner {
    fn latest_all(&self, kind: RecordKind) -> Vec<Record> {
        let Some(t) = self.tables.get(&kind) else {
            return Vec::new();
        };
        t.order
            .iter()
            .filter_map(|id| t.versions.get(id).and_then(|v| v.last()).cloned())
            .collect()
    }

    fn next_id(&mut self, kind: RecordKind, salt: &str) -> RecordId {
        loop {
            let counter = self.counters.entry(kind).or_insert(0);
            *counter += 1;
            let n = *counter;
            let digest = Sha256::digest(format!("{salt}/{}/{n}", kind.as_str()).as_bytes());
            let id = RecordId(format!("{}-{n:06}-{}", kind.id_prefix(), hex::encode(&digest[..2])));
            if self.find(kind, &id).is_none() {
                return id;
            }
        }
    }

    fn insert(&mut self, record: Record) {
        let t = self.tables.entry(record.kind()).or_default();
        let id = record.id().clone();
        let versions = t.versions.entry(id.clone()).or_default();
        if versions.is_empty() {
            t.order.push(id);
        }
        versions.push(record);
    }

    fn version_of(&self, kind: RecordKind, id: &RecordId) -> usize {
        self.tables
            .get(&kind)
            .and_then(|t| t.versions.get(id))
            .map_or(0, Vec::len)
    }
}

/// Lookup over the committed store plus records staged earlier in the same batch.
struct Overlay<'a> {
    base: &'a Inner,
    staged: &'a [Record],
}

impl Lookup for Overlay<'_> {
    fn find(&self, kind: RecordKind, id: &RecordId) -> Option<&Record> {
        self.staged
            .iter()
            .rev()
            .find(|r| r.kind() == kind && r.id() == id)
            .or_else(|| self.base.find(kind, id))
    }
}

pub struct Store {
    dir: Option<PathBuf>,
    salt: String,
    inner: RwLock<Inner>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("dir", &self.dir).finish()
    }
}

const DEFAULT_SALT: &str = "normloom";

impl Store {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            salt: DEFAULT_SALT.to_owned(),
            inner: RwLock::new(Inner::default()),
        }
    }

    /// Opens (creating if needed) a store directory and replays its logs.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut inner = Inner::default();
        let mut files: Vec<&'static str> = RecordKind::ALL.iter().map(|k| k.file_name()).collect();
        files.dedup();
        for name in files {
            let path = dir.join(name);
            if path.exists() {
                load_file(&path, &mut inner)?;
            }
        }
        for (kind, table) in &inner.tables {
            let max = table
                .order
                .iter()
                .filter_map(|id| id.0.split('-').nth(1).and_then(|n| n.parse::<u64>().ok()))
                .max()
                .unwrap_or(0);
            inner.counters.insert(*kind, max.max(table.order.len() as u64));
        }
        Ok(Self {
            dir: Some(dir),
            salt: DEFAULT_SALT.to_owned(),
            inner: RwLock::new(inner),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn read(&self) -> RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Appends a new record, assigning an id when the record has none.
    pub fn append(&self, record: impl Into<Record>) -> Result<RecordId, StoreError> {
        let mut inner = self.write();
        let record = self.prepare_new(&mut inner, record.into(), &[])?;
        let id = record.id().clone();
        self.persist(&mut inner, &record, 1)?;
        inner.insert(record);
        Ok(id)
    }

    /// Appends several new records; nothing is written unless every one validates.
    pub fn append_all(&self, records: Vec<Record>) -> Result<Vec<RecordId>, StoreError> {
        self.commit(records, Vec::new())
    }

    /// Appends new records and writes new versions of existing ones as one unit. Every record
    /// is validated against the store plus the records before it in the batch; nothing is
    /// written unless all pass. Returns the ids of the appended records.
    pub fn commit(&self, appends: Vec<Record>, updates: Vec<Record>) -> Result<Vec<RecordId>, StoreError> {
        let mut inner = self.write();
        let mut staged: Vec<Record> = Vec::with_capacity(appends.len() + updates.len());
        let appended = appends.len();
        for (index, record) in appends.into_iter().enumerate() {
            let r = self
                .prepare_new(&mut inner, record, &staged)
                .map_err(|e| StoreError::Batch { index, source: Box::new(e) })?;
            if staged.iter().any(|s| s.kind() == r.kind() && s.id() == r.id()) {
                return Err(StoreError::Batch {
                    index,
                    source: Box::new(StoreError::DuplicateId { kind: r.kind(), id: r.id().clone() }),
                });
            }
            staged.push(r);
        }
        for (offset, record) in updates.into_iter().enumerate() {
            let index = appended + offset;
            let overlay = Overlay { base: &inner, staged: &staged };
            check_update(&record, &overlay).map_err(|e| StoreError::Batch { index, source: Box::new(e) })?;
            staged.push(record);
        }
        let mut ids = Vec::with_capacity(appended);
        for (i, r) in staged.into_iter().enumerate() {
            let version = inner.version_of(r.kind(), r.id()) as u64 + 1;
            self.persist(&mut inner, &r, version)?;
            if i < appended {
                ids.push(r.id().clone());
            }
            inner.insert(r);
        }
        Ok(ids)
    }

    fn prepare_new(
        &self,
        inner: &mut Inner,
        mut record: Record,
        staged: &[Record],
    ) -> Result<Record, StoreError> {
        let kind = record.kind();
        if record.id().is_unassigned() {
            let mut id = inner.next_id(kind, &self.salt);
            while staged.iter().any(|s| s.kind() == kind && s.id() == &id) {
                id = inner.next_id(kind, &self.salt);
            }
            record.set_id(id);
        } else if inner.find(kind, record.id()).is_some() {
            return Err(StoreError::DuplicateId { kind, id: record.id().clone() });
        }
        check(&record, &Overlay { base: inner, staged })?;
        Ok(record)
    }

    /// Writes a new version of an existing record. Returns the new version number.
    pub fn update(&self, record: impl Into<Record>) -> Result<u64, StoreError> {
        let record = record.into();
        let mut inner = self.write();
        check_update(&record, &*inner)?;
        let version = inner.version_of(record.kind(), record.id()) as u64 + 1;
        self.persist(&mut inner, &record, version)?;
        inner.insert(record);
        Ok(version)
    }

    fn persist(&self, inner: &mut Inner, record: &Record, version: u64) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let line = encode_line(record, version);
        let name = record.kind().file_name();
        if !inner.files.contains_key(name) {
            let f = OpenOptions::new().create(true).append(true).open(dir.join(name))?;
            inner.files.insert(name, f);
        }
        let f = inner.files.get_mut(name).expect("file opened above");
        f.write_all(line.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn get(&self, kind: RecordKind, id: &RecordId) -> Option<Record> {
        self.read().find(kind, id).cloned()
    }

    /// Every version of a record, oldest first.
    pub fn history(&self, kind: RecordKind, id: &RecordId) -> Vec<Record> {
        self.read()
            .tables
            .get(&kind)
            .and_then(|t| t.versions.get(id))
            .cloned()
            .unwrap_or_default()
    }

    pub fn version(&self, kind: RecordKind, id: &RecordId) -> u64 {
        self.read().version_of(kind, id) as u64
    }

    /// Latest versions of every record of a kind, in first-append order.
    pub fn list(&self, kind: RecordKind) -> Vec<Record> {
        self.read().latest_all(kind)
    }

    pub fn count(&self, kind: RecordKind) -> usize {
        self.read().tables.get(&kind).map_or(0, |t| t.order.len())
    }

    /// Finds the record with this id in whichever kind holds it.
    pub fn find_any(&self, id: &RecordId) -> Option<Record> {
        let inner = self.read();
        RecordKind::ALL.into_iter().find_map(|k| inner.find(k, id).cloned())
    }

    /// Runs a closure against a consistent read snapshot.
    pub fn with_lookup<T>(&self, f: impl FnOnce(&dyn Lookup) -> T) -> T {
        let inner = self.read();
        f(&*inner)
    }

    pub fn validate(&self, record: &Record) -> ValidationReport {
        let inner = self.read();
        validate_in_context(record, &*inner)
    }
}

macro_rules! typed_access {
    ($($get:ident, $list:ident => $kind:ident, $variant:ident, $ty:ty);* $(;)?) => {
        impl Store {
            $(
                pub fn $get(&self, id: &RecordId) -> Option<$ty> {
                    match self.get(RecordKind::$kind, id) {
                        Some(Record::$variant(r)) => Some(r),
                        _ => None,
                    }
                }

                pub fn $list(&self) -> Vec<$ty> {
                    self.list(RecordKind::$kind)
                        .into_iter()
                        .filter_map(|r| match r {
                            Record::$variant(r) => Some(r),
                            _ => None,
                        })
                        .collect()
                }
            )*
        }
    };
}

typed_access! {
    norm, norms => Norm, Norm, SocialNorm;
    scenario, scenarios => Scenario, Scenario, Scenario;
    situation, situations => Situation, Situation, Situation;
    dialogue, dialogues => Dialogue, Dialogue, Dialogue;
    annotation, annotations => Annotation, Annotation, TurnAnnotationSet;
    review_task, review_tasks => ReviewTask, ReviewTask, ReviewTask;
    verdict, verdicts => Verdict, Verdict, Verdict;
    aggregate, aggregates => Aggregate, Aggregate, ReviewAggregate;
    job, jobs => Job, Job, StageJob;
}

fn check(record: &Record, lookup: &dyn Lookup) -> Result<(), StoreError> {
    let report = validate_in_context(record, lookup);
    if report.is_valid() {
        Ok(())
    } else if report.has_dangling_reference() {
        Err(StoreError::DanglingReference(report))
    } else {
        Err(StoreError::Invalid(report))
    }
}

fn check_update(record: &Record, lookup: &dyn Lookup) -> Result<(), StoreError> {
    let kind = record.kind();
    let prev = lookup
        .find(kind, record.id())
        .ok_or_else(|| StoreError::NotFound { kind, id: record.id().clone() })?;
    if let (Some(from), Some(to)) = (prev.status(), record.status()) {
        if !from.state.can_become(to.state) {
            return Err(StoreError::IllegalTransition {
                id: record.id().clone(),
                from: from.state,
                to: to.state,
            });
        }
    }
    check(record, lookup)
}

/// Serializes a record as one JSON line with its `kind` tag and `version`.
pub fn encode_line(record: &Record, version: u64) -> String {
    let mut value = serde_json::to_value(record).expect("records always serialize");
    if let Some(obj) = value.as_object_mut() {
        obj.insert("version".into(), version.into());
    }
    let mut line = serde_json::to_string(&value).expect("values always serialize");
    line.push('\n');
    line
}

/// Parses one JSON line back into `(record, version)`.
pub fn decode_line(line: &str) -> Result<(Record, u64), String> {
    let mut value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let obj = value.as_object_mut().ok_or("line is not a JSON object")?;
    let version = obj
        .remove("version")
        .and_then(|v| v.as_u64())
        .ok_or("missing integer \"version\"")?;
    let record = serde_json::from_value(value).map_err(|e| e.to_string())?;
    Ok((record, version))
}

fn load_file(path: &Path, inner: &mut Inner) -> Result<(), StoreError> {
    let reader = BufReader::new(File::open(path)?);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let (record, version) = decode_line(&line).map_err(corrupt)?;
        let expected = inner.version_of(record.kind(), record.id()) as u64 + 1;
        if version != expected {
            return Err(corrupt(format!("version {version}, expected {expected}")));
        }
        inner.insert(record);
    }
    Ok(())
}
