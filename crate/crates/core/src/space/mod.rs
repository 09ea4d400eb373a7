//! Slot-based architecture search spaces.
//!
//! A space is an ordered list of slots, each with a fixed list of candidate
//! operations, plus a set of connection motifs. An [`ArchitectureDescriptor`]
//! picks one candidate per slot and one motif. Descriptors have a canonical
//! text form (see [`codec`]) used in prompts, caches and oracle tables.

mod codec;
mod registry;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use codec::{decode, encode, split_header};
pub use registry::{builtin_spaces, lookup_space, register_space, registered_spaces, resolve_space};

/// Key reserved for the connection motif in canonical strings.
pub const CONNECTION_KEY: &str = "conn";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpaceError {
    #[error("malformed space: {0}")]
    MalformedSpace(String),
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("unknown operation {1:?} for slot {0:?}")]
    UnknownOperation(String, String),
    #[error("unknown slot {0:?}")]
    UnknownSlot(String),
    #[error("descriptor belongs to space {found}, expected {expected}")]
    WrongSpace { expected: String, found: String },
    #[error("cannot parse canonical string: {0}")]
    ParseError(String),
    #[error("space name {0:?} is already registered")]
    DuplicateName(String),
    #[error("unknown search space {name:?}; registered: {}", registered.join(", "))]
    UnknownSpace { name: String, registered: Vec<String> },
    #[error("cannot read space document {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[serde(alias = "NodeClassification")]
    NodeClassification,
    #[serde(alias = "LinkPrediction")]
    LinkPrediction,
    #[serde(alias = "GraphClassification")]
    GraphClassification,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::NodeClassification,
        TaskKind::LinkPrediction,
        TaskKind::GraphClassification,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::NodeClassification => "node_classification",
            TaskKind::LinkPrediction => "link_prediction",
            TaskKind::GraphClassification => "graph_classification",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    /// Accepts both `node_classification` and `NodeClassification` spellings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s.chars().filter(|c| *c != '_' && *c != '-').collect();
        TaskKind::ALL
            .into_iter()
            .find(|k| k.as_str().replace('_', "").eq_ignore_ascii_case(&folded))
            .ok_or_else(|| {
                let names: Vec<_> = TaskKind::ALL.iter().map(|k| k.as_str()).collect();
                format!("unsupported task {s:?}; supported: {}", names.join(", "))
            })
    }
}

/// On-disk form of a space definition (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDocument {
    pub space_id: String,
    pub version: u32,
    #[serde(default)]
    pub task_kinds: Vec<TaskKind>,
    pub slots: Vec<SlotDef>,
    pub connection_candidates: Vec<String>,
    #[serde(default)]
    pub operation_prompt: String,
    #[serde(default)]
    pub connection_prompt: String,
    #[serde(default)]
    pub example_prompt: String,
}

/// One decision point of a space. Candidate order is the index order used
/// by mutation rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotDef {
    pub slot_id: String,
    pub candidates: Vec<String>,
    /// One-line description per candidate; may be empty.
    #[serde(default)]
    pub doc: Vec<String>,
}

impl SlotDef {
    pub fn new(slot_id: &str, candidates: &[&str]) -> Self {
        SlotDef {
            slot_id: slot_id.to_string(),
            candidates: candidates.iter().map(|c| c.to_string()).collect(),
            doc: Vec::new(),
        }
    }

    pub fn with_doc(mut self, doc: &[&str]) -> Self {
        self.doc = doc.iter().map(|d| d.to_string()).collect();
        self
    }

    pub fn index_of(&self, op: &str) -> Option<usize> {
        self.candidates.iter().position(|c| c == op)
    }

    pub fn doc_for(&self, index: usize) -> Option<&str> {
        self.doc.get(index).map(String::as_str).filter(|d| !d.is_empty())
    }
}

/// A validated, immutable search space.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpaceDef {
    doc: SpaceDocument,
    /// Indices into `doc.slots`, sorted by slot id.
    canonical_order: Vec<usize>,
}

fn is_slot_id(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || matches!(c, '_' | '.' | '-'))
}

fn is_space_id(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || matches!(c, '_' | '-'))
}

/// Operation and motif ids: no whitespace and none of the codec separators.
fn is_op_id(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-' | '+'))
}

impl SearchSpaceDef {
    pub fn from_document(doc: SpaceDocument) -> Result<Self, SpaceError> {
        let bad = |m: String| Err(SpaceError::MalformedSpace(m));
        if !is_space_id(&doc.space_id) {
            return bad(format!("space_id {:?} must match [a-z0-9_-]+", doc.space_id));
        }
        if doc.slots.is_empty() {
            return bad("space has no slots".into());
        }
        let mut seen = HashSet::new();
        for slot in &doc.slots {
            if !is_slot_id(&slot.slot_id) {
                return bad(format!("slot id {:?} must match [a-z0-9_.-]+", slot.slot_id));
            }
            if slot.slot_id == CONNECTION_KEY {
                return bad(format!("slot id {CONNECTION_KEY:?} is reserved"));
            }
            if !seen.insert(slot.slot_id.as_str()) {
                return bad(format!("duplicate slot id {:?}", slot.slot_id));
            }
            if slot.candidates.is_empty() {
                return bad(format!("slot {:?} has no candidates", slot.slot_id));
            }
            let mut ops = HashSet::new();
            for op in &slot.candidates {
                if !is_op_id(op) {
                    return bad(format!("slot {:?}: invalid op id {op:?}", slot.slot_id));
                }
                if !ops.insert(op.as_str()) {
                    return bad(format!("slot {:?}: duplicate op id {op:?}", slot.slot_id));
                }
            }
            if !slot.doc.is_empty() && slot.doc.len() != slot.candidates.len() {
                return bad(format!(
                    "slot {:?}: {} doc lines for {} candidates",
                    slot.slot_id,
                    slot.doc.len(),
                    slot.candidates.len()
                ));
            }
        }
        if doc.connection_candidates.is_empty() {
            return bad("connection_candidates is empty".into());
        }
        let mut motifs = HashSet::new();
        for c in &doc.connection_candidates {
            if !is_op_id(c) {
                return bad(format!("invalid connection motif id {c:?}"));
            }
            if !motifs.insert(c.as_str()) {
                return bad(format!("duplicate connection motif {c:?}"));
            }
        }
        let mut canonical_order: Vec<usize> = (0..doc.slots.len()).collect();
        canonical_order.sort_by(|&a, &b| doc.slots[a].slot_id.cmp(&doc.slots[b].slot_id));
        Ok(SearchSpaceDef { doc, canonical_order })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SpaceError> {
        let doc: SpaceDocument =
            toml::from_str(text).map_err(|e| SpaceError::MalformedSpace(e.to_string()))?;
        Self::from_document(doc)
    }

    /// Loads a space-definition document from disk.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SpaceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SpaceError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.doc).expect("space documents always serialize")
    }

    pub fn document(&self) -> &SpaceDocument {
        &self.doc
    }

    pub fn space_id(&self) -> &str {
        &self.doc.space_id
    }

    pub fn version(&self) -> u32 {
        self.doc.version
    }

    /// `<space_id>:v<version>`, the header of every canonical string.
    pub fn qualified_id(&self) -> String {
        format!("{}:v{}", self.doc.space_id, self.doc.version)
    }

    pub fn task_kinds(&self) -> &[TaskKind] {
        &self.doc.task_kinds
    }

    /// An empty task list means the space makes no claim and accepts any task.
    pub fn supports(&self, task: TaskKind) -> bool {
        self.doc.task_kinds.is_empty() || self.doc.task_kinds.contains(&task)
    }

    /// Slots in declaration order.
    pub fn slots(&self) -> &[SlotDef] {
        &self.doc.slots
    }

    /// Slots in canonical (lexicographic slot id) order.
    pub fn canonical_slots(&self) -> impl ExactSizeIterator<Item = &SlotDef> + '_ {
        self.canonical_order.iter().map(|&i| &self.doc.slots[i])
    }

    pub fn slot(&self, slot_id: &str) -> Option<&SlotDef> {
        self.doc.slots.iter().find(|s| s.slot_id == slot_id)
    }

    pub fn connection_candidates(&self) -> &[String] {
        &self.doc.connection_candidates
    }

    pub fn operation_prompt(&self) -> &str {
        &self.doc.operation_prompt
    }

    pub fn connection_prompt(&self) -> &str {
        &self.doc.connection_prompt
    }

    pub fn example_prompt(&self) -> &str {
        &self.doc.example_prompt
    }

    /// Number of distinct descriptors, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        self.doc
            .slots
            .iter()
            .map(|s| s.candidates.len() as u128)
            .fold(self.doc.connection_candidates.len() as u128, u128::saturating_mul)
    }

    /// All candidate operations, slot by slot, in canonical slot order.
    pub fn get_operations(&self) -> Vec<(String, Vec<String>)> {
        self.canonical_slots()
            .map(|s| (s.slot_id.clone(), s.candidates.clone()))
            .collect()
    }

    /// Descriptor choosing the first candidate everywhere.
    pub fn first_descriptor(&self) -> ArchitectureDescriptor {
        ArchitectureDescriptor {
            space_id: self.doc.space_id.clone(),
            version: self.doc.version,
            assignments: self
                .doc
                .slots
                .iter()
                .map(|s| (s.slot_id.clone(), s.candidates[0].clone()))
                .collect(),
            connection: self.doc.connection_candidates[0].clone(),
        }
    }

    /// Builds a descriptor from `(slot, op)` pairs and validates it.
    pub fn descriptor<'a>(
        &self,
        connection: &str,
        assignments: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<ArchitectureDescriptor, SpaceError> {
        let d = ArchitectureDescriptor {
            space_id: self.doc.space_id.clone(),
            version: self.doc.version,
            assignments: assignments
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            connection: connection.to_string(),
        };
        self.validate(&d)
            .map_err(|v| SpaceError::InvalidDescriptor(join_violations(&v)))?;
        Ok(d)
    }

    /// Reports every violation, not just the first. A foreign space id is
    /// reported alone since slots of different spaces are not comparable.
    pub fn validate(&self, d: &ArchitectureDescriptor) -> Result<(), Vec<Violation>> {
        if d.space_id != self.doc.space_id || d.version != self.doc.version {
            return Err(vec![Violation::WrongSpace {
                expected: self.qualified_id(),
                found: d.qualified_id(),
            }]);
        }
        let mut violations = Vec::new();
        for slot in self.canonical_slots() {
            match d.assignments.get(&slot.slot_id) {
                None => violations.push(Violation::MissingSlot(slot.slot_id.clone())),
                Some(op) if slot.index_of(op).is_none() => violations.push(Violation::UnknownOperation {
                    slot: slot.slot_id.clone(),
                    op: op.clone(),
                }),
                Some(_) => {}
            }
        }
        for key in d.assignments.keys() {
            if self.slot(key).is_none() {
                violations.push(Violation::UnknownSlot(key.clone()));
            }
        }
        if !self.doc.connection_candidates.contains(&d.connection) {
            violations.push(Violation::UnknownConnection(d.connection.clone()));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    pub fn is_valid(&self, d: &ArchitectureDescriptor) -> bool {
        self.validate(d).is_ok()
    }

    /// Seeded random descriptor; equal seeds give equal descriptors.
    pub fn random_descriptor(&self, seed: u64) -> ArchitectureDescriptor {
        self.sample(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform draw using the caller's generator. Slots are drawn in
    /// canonical order, then the motif.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ArchitectureDescriptor {
        let assignments = self
            .canonical_slots()
            .map(|s| {
                let i = rng.random_range(0..s.candidates.len());
                (s.slot_id.clone(), s.candidates[i].clone())
            })
            .collect();
        let conns = &self.doc.connection_candidates;
        let connection = conns[rng.random_range(0..conns.len())].clone();
        ArchitectureDescriptor {
            space_id: self.doc.space_id.clone(),
            version: self.doc.version,
            assignments,
            connection,
        }
    }

    /// Every descriptor in lexicographic order of canonical strings.
    /// Bound the stream with `Iterator::take`.
    pub fn enumerate(&self) -> Enumerate<'_> {
        Enumerate::new(self)
    }
}

pub(crate) fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    WrongSpace { expected: String, found: String },
    MissingSlot(String),
    UnknownSlot(String),
    UnknownOperation { slot: String, op: String },
    UnknownConnection(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WrongSpace { expected, found } => {
                write!(f, "space {found} does not match {expected}")
            }
            Violation::MissingSlot(s) => write!(f, "slot {s:?} is not assigned"),
            Violation::UnknownSlot(s) => write!(f, "slot {s:?} is not part of the space"),
            Violation::UnknownOperation { slot, op } => {
                write!(f, "op {op:?} is not a candidate of slot {slot:?}")
            }
            Violation::UnknownConnection(c) => write!(f, "connection motif {c:?} is not declared"),
        }
    }
}

/// One point of a search space: an op per slot plus a connection motif.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArchitectureDescriptor {
    pub space_id: String,
    pub version: u32,
    pub assignments: BTreeMap<String, String>,
    pub connection: String,
}

impl ArchitectureDescriptor {
    pub fn qualified_id(&self) -> String {
        format!("{}:v{}", self.space_id, self.version)
    }

    pub fn get(&self, slot_id: &str) -> Option<&str> {
        self.assignments.get(slot_id).map(String::as_str)
    }

    /// Canonical rendering without validation. Use [`encode`] when the
    /// descriptor has not been checked against its space.
    pub fn canonical(&self) -> String {
        let mut out = format!("{}|{}={}", self.qualified_id(), CONNECTION_KEY, self.connection);
        for (slot, op) in &self.assignments {
            out.push('|');
            out.push_str(slot);
            out.push('=');
            out.push_str(op);
        }
        out
    }
}

impl fmt::Display for ArchitectureDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// Odometer over the space in canonical-string order.
///
/// Within one position, candidates are ordered by the text that follows the
/// `=` up to the end of the string segment: `op|` for all but the last slot,
/// the bare op for the last one. Since `|` never occurs inside ids, comparing
/// those segments is the same as comparing the full canonical strings.
pub struct Enumerate<'a> {
    space: &'a SearchSpaceDef,
    /// Per position (motif first, then canonical slots): candidate indices in
    /// string order.
    orders: Vec<Vec<usize>>,
    counters: Vec<usize>,
    done: bool,
}

impl<'a> Enumerate<'a> {
    fn new(space: &'a SearchSpaceDef) -> Self {
        let n_slots = space.canonical_order.len();
        let mut orders = Vec::with_capacity(n_slots + 1);
        let sorted = |ids: &[String], terminated: bool| {
            let mut idx: Vec<usize> = (0..ids.len()).collect();
            let key = |i: usize| {
                if terminated {
                    format!("{}|", ids[i])
                } else {
                    ids[i].clone()
                }
            };
            idx.sort_by_key(|&i| key(i));
            idx
        };
        orders.push(sorted(&space.doc.connection_candidates, true));
        for (pos, slot) in space.canonical_slots().enumerate() {
            orders.push(sorted(&slot.candidates, pos + 1 < n_slots));
        }
        let counters = vec![0; orders.len()];
        Enumerate {
            space,
            orders,
            counters,
            done: false,
        }
    }

    fn current(&self) -> ArchitectureDescriptor {
        let conn = &self.space.doc.connection_candidates[self.orders[0][self.counters[0]]];
        let assignments = self
            .space
            .canonical_slots()
            .enumerate()
            .map(|(pos, slot)| {
                let i = self.orders[pos + 1][self.counters[pos + 1]];
                (slot.slot_id.clone(), slot.candidates[i].clone())
            })
            .collect();
        ArchitectureDescriptor {
            space_id: self.space.doc.space_id.clone(),
            version: self.space.doc.version,
            assignments,
            connection: conn.clone(),
        }
    }
}

impl Iterator for Enumerate<'_> {
    type Item = ArchitectureDescriptor;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.current();
        // The last position is the least significant.
        let mut pos = self.counters.len();
        loop {
            if pos == 0 {
                self.done = true;
                break;
            }
            pos -= 1;
            self.counters[pos] += 1;
            if self.counters[pos] < self.orders[pos].len() {
                break;
            }
            self.counters[pos] = 0;
        }
        Some(item)
    }
}

/// Distinct op ids across all slots plus motif ids, sorted.
pub fn all_identifiers(space: &SearchSpaceDef) -> BTreeSet<String> {
    space
        .slots()
        .iter()
        .flat_map(|s| s.candidates.iter().cloned())
        .chain(space.connection_candidates().iter().cloned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn autogel() -> std::sync::Arc<SearchSpaceDef> {
        lookup_space("autogel").unwrap()
    }

    #[test]
    fn builtin_autogel_shape() {
        let s = autogel();
        let sizes: Vec<usize> = s.slots().iter().map(|s| s.candidates.len()).collect();
        assert_eq!(sizes, vec![3, 2, 3, 3, 2, 3, 3, 4]);
        let ids: Vec<&str> = s.slots().iter().map(|s| s.slot_id.as_str()).collect();
        assert_eq!(
            ids,
            ["l1.agg", "l1.comb", "l1.act", "l2.agg", "l2.comb", "l2.act", "skip", "pool"]
        );
        assert_eq!(s.connection_candidates(), ["stack2"]);
        assert_eq!(s.size(), 3888);
    }

    #[test]
    fn builtin_nbg_shape() {
        let s = lookup_space("nbg:v1").unwrap();
        let ops = s.get_operations();
        assert_eq!(ops.len(), 4);
        for (i, (slot, cands)) in ops.iter().enumerate() {
            assert_eq!(slot, &format!("op{i}"));
            assert_eq!(
                cands,
                &["gcn", "gat", "sage", "gin", "cheb", "arma", "k_gnn", "skip", "fc"]
            );
        }
        assert_eq!(s.connection_candidates(), ["chain"]);
        assert_eq!(s.size(), 6561);
    }

    #[test]
    fn get_operations_is_lexicographic() {
        let ops = autogel().get_operations();
        let ids: Vec<&str> = ops.iter().map(|(s, _)| s.as_str()).collect();
        assert_eq!(
            ids,
            ["l1.act", "l1.agg", "l1.comb", "l2.act", "l2.agg", "l2.comb", "pool", "skip"]
        );
        assert_eq!(ops[0].1, ["relu", "prelu", "id"]);
    }

    #[test]
    fn duplicate_slot_id_is_malformed() {
        let doc = r#"
            space_id = "dup"
            version = 1
            connection_candidates = ["chain"]
            [[slots]]
            slot_id = "agg"
            candidates = ["add"]
            [[slots]]
            slot_id = "agg"
            candidates = ["max"]
        "#;
        assert!(matches!(
            SearchSpaceDef::from_toml_str(doc),
            Err(SpaceError::MalformedSpace(m)) if m.contains("duplicate slot id")
        ));
    }

    #[test]
    fn malformed_documents() {
        let empty_cands = r#"
            space_id = "x"
            version = 1
            connection_candidates = ["c"]
            [[slots]]
            slot_id = "a"
            candidates = []
        "#;
        assert!(SearchSpaceDef::from_toml_str(empty_cands).is_err());
        let no_slots = "space_id = \"x\"\nversion = 1\nconnection_candidates = [\"c\"]\nslots = []\n";
        assert!(SearchSpaceDef::from_toml_str(no_slots).is_err());
        let missing_slots = "space_id = \"x\"\nversion = 1\nconnection_candidates = [\"c\"]\n";
        assert!(SearchSpaceDef::from_toml_str(missing_slots).is_err());
        let no_conn = r#"
            space_id = "x"
            version = 1
            connection_candidates = []
            [[slots]]
            slot_id = "a"
            candidates = ["b"]
        "#;
        assert!(SearchSpaceDef::from_toml_str(no_conn).is_err());
    }

    #[test]
    fn toml_round_trip_of_builtins() {
        for (_, space) in builtin_spaces() {
            let back = SearchSpaceDef::from_toml_str(&space.to_toml_string()).unwrap();
            assert_eq!(back, *space);
        }
    }

    #[test]
    fn validate_reports_all_violations() {
        let s = autogel();
        let mut d = s.first_descriptor();
        assert!(s.validate(&d).is_ok());
        d.assignments.remove("pool");
        d.assignments.insert("l1.agg".into(), "foo".into());
        let v = s.validate(&d).unwrap_err();
        assert_eq!(v.len(), 2);
        assert!(v.contains(&Violation::MissingSlot("pool".into())));
        assert!(v.contains(&Violation::UnknownOperation {
            slot: "l1.agg".into(),
            op: "foo".into()
        }));

        let foreign = lookup_space("nbg").unwrap().first_descriptor();
        assert_eq!(s.validate(&foreign).unwrap_err().len(), 1);
    }

    #[test]
    fn random_descriptor_is_valid_and_deterministic() {
        let s = autogel();
        for seed in 0..1000 {
            assert!(s.is_valid(&s.random_descriptor(seed)));
        }
        assert_eq!(
            s.random_descriptor(7).canonical(),
            s.random_descriptor(7).canonical()
        );
    }

    #[test]
    fn random_draws_cover_every_candidate() {
        let s = autogel();
        let draws = 10 * s.size() as u64;
        let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
        for seed in 0..draws {
            for (k, v) in s.random_descriptor(seed).assignments {
                seen.insert((k, v));
            }
        }
        let total: usize = s.slots().iter().map(|s| s.candidates.len()).sum();
        assert_eq!(seen.len(), total);
    }

    #[test]
    fn enumerate_counts() {
        assert_eq!(autogel().enumerate().count(), 3888);
        assert_eq!(lookup_space("nbg").unwrap().enumerate().count(), 6561);
        assert_eq!(lookup_space("relgnn").unwrap().enumerate().count(), 81);
    }

    #[test]
    fn enumerate_matches_sorted_canonicals() {
        // Brute force: sort every canonical string and compare with the
        // odometer order.
        for name in ["autogel", "nbg", "relgnn", "hp"] {
            let s = lookup_space(name).unwrap();
            let emitted: Vec<String> = s.enumerate().map(|d| d.canonical()).collect();
            let mut sorted = emitted.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(emitted, sorted, "{name}");
        }
    }

    #[test]
    fn enumerate_limit_gives_smallest() {
        let s = autogel();
        let mut all: Vec<String> = s.enumerate().map(|d| d.canonical()).collect();
        all.sort();
        let first: Vec<String> = s.enumerate().take(5).map(|d| d.canonical()).collect();
        assert_eq!(first, all[..5]);
    }

    #[test]
    fn enumerate_order_with_prefix_ops() {
        // "res" is a prefix of "resx": in a middle slot "resx|" sorts first,
        // in the last slot "res" does.
        let doc = r#"
            space_id = "pfx"
            version = 1
            connection_candidates = ["c"]
            [[slots]]
            slot_id = "a"
            candidates = ["res", "resx"]
            [[slots]]
            slot_id = "b"
            candidates = ["res", "resx"]
        "#;
        let s = SearchSpaceDef::from_toml_str(doc).unwrap();
        let emitted: Vec<String> = s.enumerate().map(|d| d.canonical()).collect();
        let mut sorted = emitted.clone();
        sorted.sort();
        assert_eq!(emitted, sorted);
        assert_eq!(emitted[0], "pfx:v1|conn=c|a=resx|b=res");
    }

    #[test]
    fn task_kind_parsing() {
        assert_eq!(
            "NodeClassification".parse::<TaskKind>().unwrap(),
            TaskKind::NodeClassification
        );
        assert_eq!(
            "link_prediction".parse::<TaskKind>().unwrap(),
            TaskKind::LinkPrediction
        );
        let err = "Regression".parse::<TaskKind>().unwrap_err();
        assert!(err.contains("node_classification"));
    }
}
