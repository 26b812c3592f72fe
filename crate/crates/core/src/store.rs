//! The evolution tree: lineage-linked design records and their verification
//! results, kept as an append-only sequence of events.
//!
//! [`EvoStore`] is a pure state machine. Every mutation appends one
//! [`EvoEvent`]; [`EvoStore::apply`] replays events, so a store rebuilt from its
//! own events is equal to the original. [`LogWriter`] persists events as JSON
//! Lines with a per-line SHA-256 checksum and [`replay`] reads them back.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::genome::GpKind;
use crate::unit_tree::UnitTree;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignId(pub String);

impl fmt::Display for DesignId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DesignId {
    fn from(s: &str) -> Self {
        DesignId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub parents: Vec<DesignId>,
    /// `None` for seed designs.
    pub operation: Option<GpKind>,
}

impl Lineage {
    pub fn seed() -> Self {
        Lineage {
            parents: Vec::new(),
            operation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ProposalMeta {
    /// Reviewer rating of the accepted proposal.
    pub quality: f64,
    /// Designer round that produced the design.
    pub round: u64,
    /// Simulated clock at insertion, in minutes.
    pub created_at: f64,
    /// Which selection branch chose the parents, if any.
    pub selection: Option<String>,
    pub generator_calls: u64,
    pub token_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "scales", rename_all = "snake_case")]
pub enum Status {
    Proposed,
    Implemented,
    Verified(usize),
    Erroneous,
}

pub type TaskScores = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub id: DesignId,
    pub tree: UnitTree,
    pub program: String,
    pub lineage: Lineage,
    pub meta: ProposalMeta,
    /// Scale label → task → score.
    pub results: BTreeMap<String, TaskScores>,
    pub errors: usize,
    pub status: Status,
}

impl DesignRecord {
    pub fn confidence(&self) -> usize {
        self.results.len()
    }

    /// Flat mean over every recorded `(scale, task)` score.
    pub fn fitness(&self) -> Option<f64> {
        let (sum, n) = self
            .results
            .values()
            .flat_map(|t| t.values())
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn is_verified_at(&self, scale: &str) -> bool {
        self.results.contains_key(scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum VerificationOutcome {
    Scores { scores: TaskScores },
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    DesignAdded {
        id: DesignId,
        tree: UnitTree,
        program: String,
        lineage: Lineage,
        meta: ProposalMeta,
    },
    VerificationRecorded {
        id: DesignId,
        scale: String,
        at: f64,
        #[serde(flatten)]
        outcome: VerificationOutcome,
    },
    StatusChanged {
        id: DesignId,
        status: Status,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvoEvent {
    pub seq: u64,
    pub event: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreConfig {
    pub scales: Vec<String>,
    /// Failed verifications after which a design is marked erroneous.
    pub error_threshold: usize,
}

impl StoreConfig {
    pub fn new(scales: Vec<String>) -> Self {
        StoreConfig {
            scales,
            error_threshold: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error("design `{0}` already exists")]
    DuplicateId(DesignId),
    #[error("broken lineage for `{id}`: {detail}")]
    BrokenLineage { id: DesignId, detail: String },
    #[error("no design `{0}`")]
    UnknownDesign(DesignId),
    #[error("design `{id}` is already verified at scale {scale}")]
    ScaleAlreadyVerified { id: DesignId, scale: String },
    #[error("design `{0}` has no verification results")]
    Unverified(DesignId),
    #[error("unknown scale `{0}`")]
    UnknownScale(String),
    #[error("score for task `{task}` is {value}, outside [0, 1]")]
    InvalidScore { task: String, value: f64 },
    #[error("invalid status change for `{id}`: {detail}")]
    InvalidTransition { id: DesignId, detail: String },
    #[error("corrupt log at line {line}: {detail}")]
    CorruptLog { line: usize, detail: String },
    #[error("log I/O: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvoStore {
    config: StoreConfig,
    records: BTreeMap<DesignId, DesignRecord>,
    /// Insertion order.
    order: Vec<DesignId>,
    events: Vec<EvoEvent>,
}

impl EvoStore {
    pub fn new(config: StoreConfig) -> Self {
        EvoStore {
            config,
            records: BTreeMap::new(),
            order: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn get(&self, id: &DesignId) -> Option<&DesignRecord> {
        self.records.get(id)
    }

    /// Records in insertion order.
    pub fn designs(&self) -> impl Iterator<Item = &DesignRecord> {
        self.order.iter().map(move |id| &self.records[id])
    }

    pub fn events(&self) -> &[EvoEvent] {
        &self.events
    }

    pub fn next_seq(&self) -> u64 {
        self.events.len() as u64 + 1
    }

    pub fn fitness(&self, id: &DesignId) -> Result<f64, StoreError> {
        self.record(id)?
            .fitness()
            .ok_or_else(|| StoreError::Unverified(id.clone()))
    }

    pub fn confidence(&self, id: &DesignId) -> Result<usize, StoreError> {
        Ok(self.record(id)?.confidence())
    }

    fn record(&self, id: &DesignId) -> Result<&DesignRecord, StoreError> {
        self.records.get(id).ok_or_else(|| StoreError::UnknownDesign(id.clone()))
    }

    pub fn add_design(
        &mut self,
        id: DesignId,
        tree: UnitTree,
        program: String,
        lineage: Lineage,
        meta: ProposalMeta,
    ) -> Result<&EvoEvent, StoreError> {
        self.commit(EventKind::DesignAdded {
            id,
            tree,
            program,
            lineage,
            meta,
        })
    }

    pub fn mark_implemented(&mut self, id: &DesignId) -> Result<&EvoEvent, StoreError> {
        self.commit(EventKind::StatusChanged {
            id: id.clone(),
            status: Status::Implemented,
        })
    }

    pub fn record_verification(
        &mut self,
        id: &DesignId,
        scale: &str,
        scores: TaskScores,
        at: f64,
    ) -> Result<&EvoEvent, StoreError> {
        self.commit(EventKind::VerificationRecorded {
            id: id.clone(),
            scale: scale.to_string(),
            at,
            outcome: VerificationOutcome::Scores { scores },
        })
    }

    /// Counts a failed verification run; at the threshold the design becomes erroneous.
    pub fn record_verification_error(&mut self, id: &DesignId, scale: &str, at: f64) -> Result<&EvoEvent, StoreError> {
        self.commit(EventKind::VerificationRecorded {
            id: id.clone(),
            scale: scale.to_string(),
            at,
            outcome: VerificationOutcome::Error,
        })?;
        let r = &self.records[id];
        if r.errors >= self.config.error_threshold && r.status != Status::Erroneous {
            self.commit(EventKind::StatusChanged {
                id: id.clone(),
                status: Status::Erroneous,
            })?;
        }
        Ok(self.events.last().expect("just appended"))
    }

    fn commit(&mut self, event: EventKind) -> Result<&EvoEvent, StoreError> {
        self.check(&event)?;
        let e = EvoEvent {
            seq: self.next_seq(),
            event,
        };
        self.apply_unchecked(e);
        Ok(self.events.last().expect("just appended"))
    }

    /// Applies a replayed event, enforcing sequence order and every operation precondition.
    pub fn apply(&mut self, event: EvoEvent) -> Result<(), StoreError> {
        if event.seq != self.next_seq() {
            return Err(StoreError::CorruptLog {
                line: 0,
                detail: format!("expected sequence {}, found {}", self.next_seq(), event.seq),
            });
        }
        self.check(&event.event)?;
        self.apply_unchecked(event);
        Ok(())
    }

    fn check(&self, event: &EventKind) -> Result<(), StoreError> {
        match event {
            EventKind::DesignAdded { id, lineage, .. } => {
                if self.records.contains_key(id) {
                    return Err(StoreError::DuplicateId(id.clone()));
                }
                let broken = |detail: String| StoreError::BrokenLineage {
                    id: id.clone(),
                    detail,
                };
                if let Some(p) = lineage.parents.iter().find(|p| !self.records.contains_key(*p)) {
                    return Err(broken(format!("unknown parent `{p}`")));
                }
                let expected = lineage.operation.map_or(0, GpKind::parent_count);
                if lineage.parents.len() != expected {
                    return Err(broken(format!(
                        "{:?} needs {expected} parent(s), found {}",
                        lineage.operation,
                        lineage.parents.len()
                    )));
                }
                Ok(())
            }
            EventKind::VerificationRecorded { id, scale, outcome, .. } => {
                let r = self.record(id)?;
                if !self.config.scales.contains(scale) {
                    return Err(StoreError::UnknownScale(scale.clone()));
                }
                if r.is_verified_at(scale) {
                    return Err(StoreError::ScaleAlreadyVerified {
                        id: id.clone(),
                        scale: scale.clone(),
                    });
                }
                if let VerificationOutcome::Scores { scores } = outcome {
                    if let Some((task, value)) = scores.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                        return Err(StoreError::InvalidScore {
                            task: task.clone(),
                            value: *value,
                        });
                    }
                }
                Ok(())
            }
            EventKind::StatusChanged { id, status } => {
                let r = self.record(id)?;
                let ok = match status {
                    Status::Implemented => r.status == Status::Proposed,
                    Status::Erroneous => r.status != Status::Erroneous,
                    // Derived from results, never set directly.
                    Status::Proposed | Status::Verified(_) => false,
                };
                if ok {
                    Ok(())
                } else {
                    Err(StoreError::InvalidTransition {
                        id: id.clone(),
                        detail: format!("{:?} -> {status:?}", r.status),
                    })
                }
            }
        }
    }

    fn apply_unchecked(&mut self, e: EvoEvent) {
        match &e.event {
            EventKind::DesignAdded {
                id,
                tree,
                program,
                lineage,
                meta,
            } => {
                self.order.push(id.clone());
                self.records.insert(
                    id.clone(),
                    DesignRecord {
                        id: id.clone(),
                        tree: tree.clone(),
                        program: program.clone(),
                        lineage: lineage.clone(),
                        meta: meta.clone(),
                        results: BTreeMap::new(),
                        errors: 0,
                        status: Status::Proposed,
                    },
                );
            }
            EventKind::VerificationRecorded { id, scale, outcome, .. } => {
                let r = self.records.get_mut(id).expect("checked");
                match outcome {
                    VerificationOutcome::Scores { scores } => {
                        r.results.insert(scale.clone(), scores.clone());
                        if r.status != Status::Erroneous {
                            r.status = Status::Verified(r.results.len());
                        }
                    }
                    VerificationOutcome::Error => r.errors += 1,
                }
            }
            EventKind::StatusChanged { id, status } => {
                self.records.get_mut(id).expect("checked").status = *status;
            }
        }
        self.events.push(e);
    }

    /// Rebuilds a store from events.
    pub fn from_events(config: StoreConfig, events: impl IntoIterator<Item = EvoEvent>) -> Result<Self, StoreError> {
        let mut s = EvoStore::new(config);
        for e in events {
            s.apply(e)?;
        }
        Ok(s)
    }

    /// Every design id reachable by following parents from `id`, excluding `id`.
    pub fn ancestors(&self, id: &DesignId) -> Result<Vec<DesignId>, StoreError> {
        let mut out: Vec<DesignId> = Vec::new();
        let mut stack = self.record(id)?.lineage.parents.clone();
        while let Some(p) = stack.pop() {
            if !out.contains(&p) {
                stack.extend(self.records[&p].lineage.parents.iter().cloned());
                out.push(p);
            }
        }
        Ok(out)
    }

    pub fn summary(&self) -> StoreSummary {
        let mut s = StoreSummary {
            designs: self.len(),
            events: self.events.len(),
            ..StoreSummary::default()
        };
        for r in self.designs() {
            match r.status {
                Status::Proposed => s.proposed += 1,
                Status::Implemented => s.implemented += 1,
                Status::Verified(_) => s.verified += 1,
                Status::Erroneous => s.erroneous += 1,
            }
            if let Some(f) = r.fitness() {
                s.best_fitness = Some(s.best_fitness.map_or(f, |b: f64| b.max(f)));
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StoreSummary {
    pub designs: usize,
    pub events: usize,
    pub proposed: usize,
    pub implemented: usize,
    pub verified: usize,
    pub erroneous: usize,
    pub best_fitness: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    scales: Vec<String>,
    error_threshold: usize,
}

#[derive(Serialize)]
struct LineOut<'a> {
    seq: u64,
    event: &'a RawValue,
    checksum: String,
}

#[derive(Deserialize)]
struct LineIn<'a> {
    seq: u64,
    #[serde(borrow)]
    event: &'a RawValue,
    checksum: String,
}

fn checksum(seq: u64, event_json: &str) -> String {
    let mut h = Sha256::new();
    h.update(seq.to_string().as_bytes());
    h.update(b"\t");
    h.update(event_json.as_bytes());
    format!("{:x}", h.finalize())
}

/// One log line, without the trailing newline.
pub fn encode_event(e: &EvoEvent) -> String {
    let json = serde_json::to_string(&e.event).expect("event serializes");
    let raw = RawValue::from_string(json).expect("valid json");
    let line = LineOut {
        seq: e.seq,
        checksum: checksum(e.seq, raw.get()),
        event: &raw,
    };
    serde_json::to_string(&line).expect("line serializes")
}

pub fn encode_header(config: &StoreConfig) -> String {
    serde_json::to_string(&Header {
        schema_version: SCHEMA_VERSION,
        scales: config.scales.clone(),
        error_threshold: config.error_threshold,
    })
    .expect("header serializes")
}

/// Whole log as text.
pub fn encode_log(store: &EvoStore) -> String {
    let mut s = encode_header(&store.config);
    s.push('\n');
    for e in &store.events {
        s += &encode_event(e);
        s.push('\n');
    }
    s
}

fn io(e: std::io::Error) -> StoreError {
    StoreError::Io(e.to_string())
}

/// Appends events to a log file, flushing after each batch.
pub struct LogWriter {
    out: BufWriter<File>,
    written: u64,
}

impl LogWriter {
    /// Creates (truncating) `path` and writes the header.
    pub fn create(path: &Path, config: &StoreConfig) -> Result<Self, StoreError> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(io)?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", encode_header(config)).map_err(io)?;
        out.flush().map_err(io)?;
        Ok(LogWriter { out, written: 0 })
    }

    /// Writes every event of `store` not yet written.
    pub fn sync(&mut self, store: &EvoStore) -> Result<(), StoreError> {
        for e in &store.events()[self.written as usize..] {
            writeln!(self.out, "{}", encode_event(e)).map_err(io)?;
        }
        self.written = store.events().len() as u64;
        self.out.flush().map_err(io)
    }
}

/// Parses log text. A torn final line without a newline is dropped.
pub fn decode_log(text: &str) -> Result<EvoStore, StoreError> {
    let corrupt = |line: usize, detail: String| StoreError::CorruptLog { line, detail };
    if text.is_empty() {
        return Err(corrupt(1, "missing header".into()));
    }
    let torn = !text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let header: Header = serde_json::from_str(lines[0]).map_err(|e| corrupt(1, e.to_string()))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(corrupt(1, format!("unsupported schema version {}", header.schema_version)));
    }
    let config = StoreConfig {
        scales: header.scales,
        error_threshold: header.error_threshold,
    };
    let mut store = EvoStore::new(config);
    for (i, raw) in lines.iter().enumerate().skip(1) {
        let lineno = i + 1;
        let last = i + 1 == lines.len();
        let parsed: Result<LineIn<'_>, _> = serde_json::from_str(raw);
        let line = match parsed {
            Ok(l) => l,
            Err(_) if last && torn => break,
            Err(e) => return Err(corrupt(lineno, e.to_string())),
        };
        if checksum(line.seq, line.event.get()) != line.checksum {
            if last && torn {
                break;
            }
            return Err(corrupt(lineno, "checksum mismatch".into()));
        }
        let event: EventKind = serde_json::from_str(line.event.get()).map_err(|e| corrupt(lineno, e.to_string()))?;
        store
            .apply(EvoEvent { seq: line.seq, event })
            .map_err(|e| match e {
                StoreError::CorruptLog { detail, .. } => corrupt(lineno, detail),
                other => corrupt(lineno, other.to_string()),
            })?;
    }
    Ok(store)
}

/// Rebuilds the store recorded in the log at `path`.
pub fn replay(path: &Path) -> Result<EvoStore, StoreError> {
    decode_log(&std::fs::read_to_string(path).map_err(io)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::seeds;

    fn scales() -> Vec<String> {
        ["14M", "31M", "70M"].iter().map(|s| s.to_string()).collect()
    }

    fn store() -> EvoStore {
        EvoStore::new(StoreConfig::new(scales()))
    }

    fn add_seed(s: &mut EvoStore, id: &str) {
        s.add_design(id.into(), seeds::gpt2(), String::new(), Lineage::seed(), ProposalMeta::default())
            .unwrap();
    }

    fn scores(v: &[f64]) -> TaskScores {
        v.iter().enumerate().map(|(i, x)| (format!("t{i}"), *x)).collect()
    }

    #[test]
    fn seed_starts_proposed_and_unverified() {
        let mut s = store();
        add_seed(&mut s, "a");
        let id = DesignId::from("a");
        assert_eq!(s.get(&id).unwrap().status, Status::Proposed);
        assert_eq!(s.confidence(&id).unwrap(), 0);
        assert_eq!(s.fitness(&id), Err(StoreError::Unverified(id)));
    }

    #[test]
    fn lineage_must_exist_and_match_operation() {
        let mut s = store();
        add_seed(&mut s, "a");
        let bad = Lineage {
            parents: vec!["ghost".into()],
            operation: Some(GpKind::Mutation),
        };
        assert!(matches!(
            s.add_design("b".into(), seeds::gpt2(), String::new(), bad, ProposalMeta::default()),
            Err(StoreError::BrokenLineage { .. })
        ));
        let wrong_count = Lineage {
            parents: vec!["a".into()],
            operation: Some(GpKind::Crossover),
        };
        assert!(matches!(
            s.add_design("b".into(), seeds::gpt2(), String::new(), wrong_count, ProposalMeta::default()),
            Err(StoreError::BrokenLineage { .. })
        ));
        assert!(matches!(
            s.add_design("a".into(), seeds::gpt2(), String::new(), Lineage::seed(), ProposalMeta::default()),
            Err(StoreError::DuplicateId(_))
        ));
    }

    #[test]
    fn two_scales_flat_mean() {
        let mut s = store();
        add_seed(&mut s, "a");
        let id = DesignId::from("a");
        s.record_verification(&id, "14M", scores(&[0.6, 0.8]), 0.0).unwrap();
        assert_eq!(s.confidence(&id).unwrap(), 1);
        s.record_verification(&id, "31M", scores(&[0.7, 0.9]), 1.0).unwrap();
        assert_eq!(s.confidence(&id).unwrap(), 2);
        assert!((s.fitness(&id).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(s.get(&id).unwrap().status, Status::Verified(2));
        assert!(matches!(
            s.record_verification(&id, "14M", scores(&[0.5]), 2.0),
            Err(StoreError::ScaleAlreadyVerified { .. })
        ));
        assert!(matches!(
            s.record_verification(&"zz".into(), "14M", scores(&[0.5]), 2.0),
            Err(StoreError::UnknownDesign(_))
        ));
        assert!(matches!(
            s.record_verification(&id, "70M", scores(&[1.5]), 2.0),
            Err(StoreError::InvalidScore { .. })
        ));
    }

    #[test]
    fn errors_reach_threshold() {
        let mut s = EvoStore::new(StoreConfig {
            scales: scales(),
            error_threshold: 2,
        });
        add_seed(&mut s, "a");
        let id = DesignId::from("a");
        s.record_verification_error(&id, "14M", 0.0).unwrap();
        assert_ne!(s.get(&id).unwrap().status, Status::Erroneous);
        s.record_verification_error(&id, "14M", 0.0).unwrap();
        assert_eq!(s.get(&id).unwrap().status, Status::Erroneous);
    }

    #[test]
    fn log_round_trip_and_corruption() {
        let mut s = store();
        for i in 0..5 {
            add_seed(&mut s, &format!("d{i}"));
            s.mark_implemented(&format!("d{i}").as_str().into()).unwrap();
        }
        s.record_verification(&"d1".into(), "14M", scores(&[0.1, 0.2]), 3.5).unwrap();
        let text = encode_log(&s);
        assert_eq!(decode_log(&text).unwrap(), s);

        let lines: Vec<&str> = text.lines().collect();
        let mut deleted = lines.clone();
        deleted.remove(3);
        assert!(matches!(
            decode_log(&(deleted.join("\n") + "\n")),
            Err(StoreError::CorruptLog { line: 4, .. })
        ));
        let tampered = text.replacen("\"d1\"", "\"d9\"", 1);
        assert!(matches!(decode_log(&tampered), Err(StoreError::CorruptLog { .. })));
        for cut in 1..lines.len() {
            let prefix = lines[..cut].join("\n") + "\n";
            let r = decode_log(&prefix).unwrap();
            assert_eq!(r.events(), &s.events()[..cut - 1]);
        }
        let torn = &text[..text.len() - 10];
        assert_eq!(decode_log(torn).unwrap().events().len(), s.events().len() - 1);
    }
}
