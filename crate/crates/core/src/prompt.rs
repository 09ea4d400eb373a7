//! Search prompts, the scored-history block, and completion parsing.
//!
//! Prompts carry natural-language instructions for a real model plus a few
//! machine-readable marker lines (`#SPACE`, `#SLOT`, `#CONN`, `#HISTORY`,
//! `#END`, `#PROPOSE`) so that the offline mock policy and the tests can read
//! them back without guessing.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evaluation::EvaluationRecord;
use crate::space::{decode, ArchitectureDescriptor, SearchSpaceDef, SlotDef, SpaceDocument, SpaceError};

pub const HISTORY_MARKER: &str = "#HISTORY";
pub const END_MARKER: &str = "#END";
pub const PROPOSE_MARKER: &str = "#PROPOSE";
pub const SPACE_MARKER: &str = "#SPACE";
pub const SLOT_MARKER: &str = "#SLOT";
pub const CONN_MARKER: &str = "#CONN";

/// Default number of best records kept in the history block.
pub const DEFAULT_KEEP_BEST: usize = 20;

/// Which history records make it into the prompt: the best `keep_best`
/// plus every record of the most recent iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryPolicy {
    pub keep_best: usize,
}

impl Default for HistoryPolicy {
    fn default() -> Self {
        HistoryPolicy {
            keep_best: DEFAULT_KEEP_BEST,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskMeta {
    pub dataset_name: String,
    pub task: String,
    pub metric_name: String,
}

impl Default for TaskMeta {
    fn default() -> Self {
        TaskMeta {
            dataset_name: "unnamed".into(),
            task: "node_classification".into(),
            metric_name: "val_acc".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMeta {
    pub space_id: String,
    pub n_requested: usize,
    pub iteration: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub meta: PromptMeta,
}

const SYSTEM_TEXT: &str = "You are an expert in graph neural networks acting as the controller of a \
neural architecture search. You propose architectures, receive their validation scores, and use \
that feedback to propose better ones.";

/// Assembles the search prompt for one iteration.
pub fn build_search_prompt(
    space: &SearchSpaceDef,
    history: &[EvaluationRecord],
    n: usize,
    task: &TaskMeta,
    iteration: usize,
    seed: u64,
    policy: HistoryPolicy,
) -> PromptBundle {
    assert!(n >= 1, "at least one proposal must be requested");
    let qid = space.qualified_id();
    let mut u = String::new();
    let _ = writeln!(
        u,
        "Task: design a graph neural network for {} on the dataset {}. The score of an \
         architecture is {} (higher is better, between 0 and 1).",
        task.task, task.dataset_name, task.metric_name
    );
    u.push('\n');
    let _ = writeln!(u, "Search space {qid}.");
    for fragment in [space.operation_prompt(), space.connection_prompt()] {
        if !fragment.is_empty() {
            let _ = writeln!(u, "{fragment}");
        }
    }
    u.push_str("Slots and their candidate operations:\n");
    for slot in space.canonical_slots() {
        let _ = writeln!(u, "- {}: {}", slot.slot_id, describe_candidates(slot));
    }
    let _ = writeln!(u, "Connection motifs: {}", space.connection_candidates().join(", "));
    let _ = writeln!(u, "{SPACE_MARKER} {qid}");
    for slot in space.canonical_slots() {
        let _ = writeln!(u, "{SLOT_MARKER} {} {}", slot.slot_id, slot.candidates.join(","));
    }
    let _ = writeln!(u, "{CONN_MARKER} {}", space.connection_candidates().join(","));
    u.push('\n');
    let _ = writeln!(
        u,
        "An architecture is written as one canonical string: {qid}|conn=<motif>|<slot>=<op>|... \
         with the slots in alphabetical order and no spaces."
    );
    if !space.example_prompt().is_empty() {
        let _ = writeln!(u, "Example: {}", space.example_prompt());
    }
    u.push('\n');
    let _ = writeln!(
        u,
        "Architectures evaluated so far, best first (canonical string, then {}):",
        task.metric_name
    );
    let _ = writeln!(u, "{HISTORY_MARKER}");
    u.push_str(&build_feedback_block(history, policy));
    let _ = writeln!(u, "{END_MARKER}");
    u.push('\n');
    let _ = writeln!(
        u,
        "Treat the scores as rewards. Keep the operations that recur in high-scoring \
         architectures, replace the operations of low-scoring ones, and spend part of the \
         proposals on operations that have not been tried yet. Do not repeat architectures \
         from the list above."
    );
    let _ = writeln!(
        u,
        "Propose {n} new architectures. Answer with exactly {n} canonical strings, one per \
         line, inside a single ``` fenced block."
    );
    let _ = write!(u, "{PROPOSE_MARKER} n={n} seed={seed} iter={iteration}");
    PromptBundle {
        system_text: SYSTEM_TEXT.to_string(),
        user_text: u,
        meta: PromptMeta {
            space_id: qid,
            n_requested: n,
            iteration,
            seed,
        },
    }
}

fn describe_candidates(slot: &SlotDef) -> String {
    slot.candidates
        .iter()
        .enumerate()
        .map(|(i, op)| match slot.doc_for(i) {
            Some(d) => format!("{op} ({d})"),
            None => op.clone(),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Records kept under `policy`, one per canonical (highest metric wins),
/// sorted by metric descending then canonical ascending.
pub fn select_history(history: &[EvaluationRecord], policy: HistoryPolicy) -> Vec<&EvaluationRecord> {
    let mut best: BTreeMap<&str, &EvaluationRecord> = BTreeMap::new();
    for r in history {
        best.entry(r.canonical.as_str())
            .and_modify(|cur| {
                if r.metric_value > cur.metric_value {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    let mut ranked: Vec<&EvaluationRecord> = best.into_values().collect();
    ranked.sort_by(|a, b| rank_order(a, b));

    let latest = history.iter().map(|r| r.iteration).max();
    let latest_canonicals: HashSet<&str> = history
        .iter()
        .filter(|r| Some(r.iteration) == latest)
        .map(|r| r.canonical.as_str())
        .collect();
    ranked
        .into_iter()
        .enumerate()
        .filter(|(i, r)| *i < policy.keep_best || latest_canonicals.contains(r.canonical.as_str()))
        .map(|(_, r)| r)
        .collect()
}

/// Metric descending, then canonical ascending.
pub fn rank_order(a: &EvaluationRecord, b: &EvaluationRecord) -> std::cmp::Ordering {
    b.metric_value
        .total_cmp(&a.metric_value)
        .then_with(|| a.canonical.cmp(&b.canonical))
}

/// `<canonical> <metric with 4 decimals>` per kept record, newline-terminated.
pub fn build_feedback_block(history: &[EvaluationRecord], policy: HistoryPolicy) -> String {
    let mut out = String::new();
    for r in select_history(history, policy) {
        let _ = writeln!(out, "{} {}", r.canonical, format_metric(r.metric_value));
    }
    out
}

/// Four decimals, rounding half away from zero on the decimal expansion.
pub fn format_metric(value: f64) -> String {
    // Twelve digits are exact enough to see the decimal the user meant.
    let wide = format!("{:.12}", value.abs());
    let (int_part, frac) = wide.split_once('.').expect("fixed-point format has a dot");
    let mut digits: Vec<u8> = int_part.bytes().chain(frac.bytes().take(4)).map(|b| b - b'0').collect();
    if frac.as_bytes()[4] >= b'5' {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - 4;
    let text: String = digits.iter().map(|d| char::from(b'0' + d)).collect();
    let sign = if value < 0.0 && text.bytes().any(|b| b != b'0') { "-" } else { "" };
    format!("{sign}{}.{}", &text[..split], &text[split..])
}

/// Why a completion line was not accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", content = "detail", rename_all = "snake_case")]
pub enum RejectReason {
    /// Not shaped like a canonical string.
    Unparseable(String),
    WrongSpace(String),
    UnknownSlot(String),
    UnknownOperation { slot: String, op: String },
    Duplicate,
}

impl RejectReason {
    pub fn class(&self) -> &'static str {
        match self {
            RejectReason::Unparseable(_) => "unparseable",
            RejectReason::WrongSpace(_) => "wrong_space",
            RejectReason::UnknownSlot(_) => "unknown_slot",
            RejectReason::UnknownOperation { .. } => "unknown_operation",
            RejectReason::Duplicate => "duplicate",
        }
    }
}

impl From<SpaceError> for RejectReason {
    fn from(e: SpaceError) -> Self {
        match e {
            SpaceError::WrongSpace { found, .. } => RejectReason::WrongSpace(found),
            SpaceError::UnknownSlot(s) => RejectReason::UnknownSlot(s),
            SpaceError::UnknownOperation(slot, op) => RejectReason::UnknownOperation { slot, op },
            other => RejectReason::Unparseable(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostics {
    pub accepted: usize,
    pub rejected_lines: Vec<(String, RejectReason)>,
    pub filled_random: usize,
    pub truncated: usize,
    /// Set when repair had to repeat descriptors because the space ran out.
    pub repeats: bool,
}

impl ParseDiagnostics {
    /// Rejection counts per reason class.
    pub fn rejection_classes(&self) -> BTreeMap<&'static str, usize> {
        let mut out = BTreeMap::new();
        for (_, r) in &self.rejected_lines {
            *out.entry(r.class()).or_insert(0) += 1;
        }
        out
    }
}

/// Lines of every fenced block, or all lines when there is none. An
/// unterminated fence runs to the end of the text.
fn candidate_lines(completion: &str) -> Vec<&str> {
    let lines: Vec<&str> = completion.lines().collect();
    if !lines.iter().any(|l| l.trim_start().starts_with("```")) {
        return lines;
    }
    let mut out = Vec::new();
    let mut inside = false;
    for line in lines {
        if line.trim_start().starts_with("```") {
            inside = !inside;
            continue;
        }
        if inside {
            out.push(line);
        }
    }
    out
}

/// Strips list bullets, numbering and stray backticks around a line.
fn clean_line(line: &str) -> &str {
    let mut s = line.trim().trim_matches('`').trim();
    for bullet in ["- ", "* ", "+ "] {
        if let Some(rest) = s.strip_prefix(bullet) {
            s = rest.trim_start();
        }
    }
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            s = r.trim_start();
        }
    }
    s.trim_matches('`').trim()
}

/// Turns a completion into at most `n` distinct valid descriptors.
pub fn parse_completion(
    space: &SearchSpaceDef,
    completion: &str,
    n: usize,
) -> (Vec<ArchitectureDescriptor>, ParseDiagnostics) {
    let mut diag = ParseDiagnostics::default();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for raw in candidate_lines(completion) {
        let line = clean_line(raw);
        if line.is_empty() {
            continue;
        }
        match decode(space, line) {
            Ok(d) => {
                if !seen.insert(d.canonical()) {
                    diag.rejected_lines.push((line.to_string(), RejectReason::Duplicate));
                } else if out.len() >= n {
                    diag.truncated += 1;
                } else {
                    out.push(d);
                }
            }
            Err(e) => diag.rejected_lines.push((line.to_string(), e.into())),
        }
    }
    diag.accepted = out.len();
    (out, diag)
}

/// Pads `parsed` to exactly `n` descriptors with seeded random ones that are
/// neither already proposed nor in `history` whenever the space allows it.
pub fn repair_fill(
    space: &SearchSpaceDef,
    mut parsed: Vec<ArchitectureDescriptor>,
    n: usize,
    seed: u64,
    history: &HashSet<String>,
    diag: &mut ParseDiagnostics,
) -> Vec<ArchitectureDescriptor> {
    parsed.truncate(n);
    let needed = n - parsed.len();
    diag.filled_random = needed;
    if needed == 0 {
        return parsed;
    }
    let mut excluded: HashSet<String> = history.clone();
    excluded.extend(parsed.iter().map(ArchitectureDescriptor::canonical));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut fresh = Vec::with_capacity(needed);
    let attempts = 64 * needed + 256;
    for _ in 0..attempts {
        if fresh.len() == needed {
            break;
        }
        let d = space.sample(&mut rng);
        if excluded.insert(d.canonical()) {
            fresh.push(d);
        }
    }
    // Rejection sampling can miss the last few unseen points of a small or
    // nearly exhausted space; list them explicitly.
    if fresh.len() < needed && space.size() <= 1_000_000 {
        let mut rest: Vec<ArchitectureDescriptor> = space
            .enumerate()
            .filter(|d| !excluded.contains(&d.canonical()))
            .collect();
        rest.shuffle(&mut rng);
        fresh.extend(rest.into_iter().take(needed - fresh.len()));
    }
    while fresh.len() < needed {
        diag.repeats = true;
        fresh.push(space.sample(&mut rng));
    }
    parsed.extend(fresh);
    parsed
}

/// Values recovered from the marker lines of a search prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptMarkers {
    pub space: SearchSpaceDef,
    pub history: Vec<(String, f64)>,
    pub n: usize,
    pub seed: u64,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("prompt markers: {0}")]
pub struct MarkerError(pub String);

/// Reads back the markers written by [`build_search_prompt`].
pub fn parse_markers(prompt: &str) -> Result<PromptMarkers, MarkerError> {
    let err = |m: &str| MarkerError(m.to_string());
    let mut space_header = None;
    let mut slots = Vec::new();
    let mut conns = None;
    let mut propose = None;
    let mut history = Vec::new();
    let mut in_history = false;
    let mut saw_end = false;
    for line in prompt.lines() {
        let line = line.trim();
        if in_history {
            if line == END_MARKER {
                in_history = false;
                saw_end = true;
            } else if !line.is_empty() {
                let (c, m) = line.rsplit_once(' ').ok_or_else(|| err("bad history line"))?;
                let m: f64 = m.parse().map_err(|_| err("bad history metric"))?;
                history.push((c.to_string(), m));
            }
            continue;
        }
        if line == HISTORY_MARKER {
            in_history = true;
        } else if let Some(rest) = line.strip_prefix(SPACE_MARKER) {
            space_header = Some(rest.trim().to_string());
        } else if let Some(rest) = line.strip_prefix(SLOT_MARKER) {
            let (id, cands) = rest.trim().split_once(' ').ok_or_else(|| err("bad #SLOT line"))?;
            slots.push(SlotDef {
                slot_id: id.to_string(),
                candidates: cands.split(',').map(str::to_string).collect(),
                doc: Vec::new(),
            });
        } else if let Some(rest) = line.strip_prefix(CONN_MARKER) {
            conns = Some(rest.trim().split(',').map(str::to_string).collect::<Vec<_>>());
        } else if let Some(rest) = line.strip_prefix(PROPOSE_MARKER) {
            propose = Some(rest.trim().to_string());
        }
    }
    if !saw_end {
        return Err(err("missing #HISTORY ... #END block"));
    }
    let propose = propose.ok_or_else(|| err("missing #PROPOSE line"))?;
    let mut fields = BTreeMap::new();
    for kv in propose.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| err("bad #PROPOSE field"))?;
        fields.insert(k, v);
    }
    let field = |k: &str| fields.get(k).copied().ok_or_else(|| err(&format!("#PROPOSE lacks {k}")));
    let n: usize = field("n")?.parse().map_err(|_| err("bad n"))?;
    let seed: u64 = field("seed")?.parse().map_err(|_| err("bad seed"))?;
    let iteration: usize = field("iter")?.parse().map_err(|_| err("bad iter"))?;

    let header = space_header.ok_or_else(|| err("missing #SPACE line"))?;
    let (space_id, version) =
        crate::space::split_header(&header).map_err(|e| MarkerError(e.to_string()))?;
    let doc = SpaceDocument {
        space_id: space_id.to_string(),
        version,
        task_kinds: Vec::new(),
        slots,
        connection_candidates: conns.ok_or_else(|| err("missing #CONN line"))?,
        operation_prompt: String::new(),
        connection_prompt: String::new(),
        example_prompt: String::new(),
    };
    let space = SearchSpaceDef::from_document(doc).map_err(|e| MarkerError(e.to_string()))?;
    Ok(PromptMarkers {
        space,
        history,
        n,
        seed,
        iteration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{all_identifiers, lookup_space, registered_spaces};

    fn rec(canonical: &str, metric: f64, iteration: usize) -> EvaluationRecord {
        EvaluationRecord::new(canonical, "val_acc", metric, "test", 0, iteration)
    }

    fn meta() -> TaskMeta {
        TaskMeta {
            dataset_name: "cora".into(),
            task: "node_classification".into(),
            metric_name: "val_acc".into(),
        }
    }

    #[test]
    fn empty_history_prompt() {
        let s = lookup_space("autogel").unwrap();
        let p = build_search_prompt(&s, &[], 10, &meta(), 0, 0, HistoryPolicy::default());
        for (slot, ops) in s.get_operations() {
            assert!(p.user_text.contains(&slot));
            for op in ops {
                assert!(p.user_text.contains(&op));
            }
        }
        // agg 3 + comb 2 + act 3 + skip 3 distinct ops; pool adds none new; one motif.
        assert_eq!(all_identifiers(&s).len(), 3 + 2 + 3 + 3 + 1);
        assert!(p.user_text.contains("#HISTORY\n#END"));
        assert!(p.user_text.contains("#PROPOSE n=10"));
        assert_eq!(p.meta.n_requested, 10);
    }

    #[test]
    fn every_registered_space_is_fully_described() {
        for (_, s) in registered_spaces() {
            let p = build_search_prompt(&s, &[], 3, &meta(), 0, 0, HistoryPolicy::default());
            for id in all_identifiers(&s) {
                assert!(p.user_text.contains(&id), "{} missing {id}", s.qualified_id());
            }
            for slot in s.slots() {
                assert!(p.user_text.contains(&slot.slot_id));
            }
        }
    }

    #[test]
    fn history_sorted_by_metric() {
        let h = vec![rec("archA", 0.53, 0), rec("archB", 0.67, 0)];
        assert_eq!(
            build_feedback_block(&h, HistoryPolicy::default()),
            "archB 0.6700\narchA 0.5300\n"
        );
        let ties = vec![rec("b", 0.5, 0), rec("a", 0.5, 0)];
        assert_eq!(build_feedback_block(&ties, HistoryPolicy::default()), "a 0.5000\nb 0.5000\n");
    }

    #[test]
    fn history_cap() {
        let mut h = Vec::new();
        for i in 0..500 {
            h.push(rec(&format!("arch{i:03}"), (i % 97) as f64 / 100.0, i / 10));
        }
        let block = build_feedback_block(&h, HistoryPolicy { keep_best: 20 });
        assert!(block.lines().count() <= 30);
        // The latest iteration is always present.
        for i in 490..500 {
            assert!(block.contains(&format!("arch{i:03} ")));
        }
    }

    #[test]
    fn feedback_formatting() {
        assert_eq!(build_feedback_block(&[rec("c", 0.5, 0)], HistoryPolicy::default()), "c 0.5000\n");
        assert_eq!(build_feedback_block(&[], HistoryPolicy::default()), "");
        assert_eq!(format_metric(0.66666), "0.6667");
        assert_eq!(format_metric(0.12345), "0.1235");
        assert_eq!(format_metric(0.99995), "1.0000");
        assert_eq!(format_metric(1.0), "1.0000");
        assert_eq!(format_metric(0.0), "0.0000");
        assert_eq!(format_metric(0.8093), "0.8093");
    }

    #[test]
    fn feedback_lines_decode_back() {
        let s = lookup_space("nbg").unwrap();
        let h: Vec<EvaluationRecord> = (0..30)
            .map(|i| rec(&s.random_descriptor(i).canonical(), i as f64 / 40.0, 0))
            .collect();
        for line in build_feedback_block(&h, HistoryPolicy::default()).lines() {
            let (c, _) = line.rsplit_once(' ').unwrap();
            let d = decode(&s, c).unwrap();
            assert_eq!(d.canonical(), c);
        }
    }

    #[test]
    fn prompt_is_deterministic_and_markers_read_back() {
        let s = lookup_space("autogel").unwrap();
        let h = vec![rec(&s.first_descriptor().canonical(), 0.53, 2)];
        let a = build_search_prompt(&s, &h, 7, &meta(), 3, 11, HistoryPolicy::default());
        let b = build_search_prompt(&s, &h, 7, &meta(), 3, 11, HistoryPolicy::default());
        assert_eq!(a, b);
        let m = parse_markers(&a.user_text).unwrap();
        assert_eq!((m.n, m.seed, m.iteration), (7, 11, 3));
        assert_eq!(m.space.get_operations(), s.get_operations());
        assert_eq!(m.history, vec![(s.first_descriptor().canonical(), 0.53)]);
    }

    #[test]
    fn markers_missing() {
        assert!(parse_markers("no markers").is_err());
        assert!(parse_markers("#HISTORY\n#END\n").is_err());
    }

    #[test]
    fn parse_fenced_with_rejection() {
        let s = lookup_space("nbg").unwrap();
        let text = "Here you go:\n```\nnbg:v1|conn=chain|op0=gcn|op1=gcn|op2=gcn|op3=gcn\n\
                    nbg:v1|conn=chain|op0=gat|op1=gcn|op2=gcn|op3=gcn\n\
                    nbg:v1|conn=chain|op0=zzz|op1=gcn|op2=gcn|op3=gcn\n```\nthanks";
        let (d, diag) = parse_completion(&s, text, 10);
        assert_eq!(d.len(), 2);
        assert_eq!(diag.accepted, 2);
        assert_eq!(diag.rejected_lines.len(), 1);
        assert_eq!(diag.rejected_lines[0].1.class(), "unknown_operation");
    }

    #[test]
    fn parse_truncates() {
        let s = lookup_space("nbg").unwrap();
        let lines: Vec<String> = s.enumerate().take(12).map(|d| d.canonical()).collect();
        let (d, diag) = parse_completion(&s, &lines.join("\n"), 10);
        assert_eq!(d.len(), 10);
        assert_eq!(diag.truncated, 2);
    }

    #[test]
    fn parse_prose_only() {
        let s = lookup_space("nbg").unwrap();
        let (d, diag) = parse_completion(&s, "I think gcn is good.\nMaybe try gat: it attends.", 10);
        assert!(d.is_empty());
        assert_eq!(diag.rejected_lines.len(), 2);
        assert!(diag.rejected_lines.iter().all(|(_, r)| r.class() == "unparseable"));
    }

    #[test]
    fn parse_strips_bullets() {
        let s = lookup_space("nbg").unwrap();
        let text = "1. `nbg:v1|conn=chain|op0=gcn|op1=gcn|op2=gcn|op3=gcn`\n- nbg:v1|conn=chain|op0=fc|op1=gcn|op2=gcn|op3=gcn";
        let (d, _) = parse_completion(&s, text, 5);
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn repair_counts() {
        let s = lookup_space("autogel").unwrap();
        let parsed: Vec<_> = s.enumerate().take(7).collect();
        let mut diag = ParseDiagnostics::default();
        let out = repair_fill(&s, parsed, 10, 1, &HashSet::new(), &mut diag);
        assert_eq!(out.len(), 10);
        assert_eq!(diag.filled_random, 3);
        let distinct: HashSet<String> = out.iter().map(|d| d.canonical()).collect();
        assert_eq!(distinct.len(), 10);

        let mut diag = ParseDiagnostics::default();
        let out = repair_fill(&s, Vec::new(), 10, 2, &HashSet::new(), &mut diag);
        let distinct: HashSet<String> = out.iter().map(|d| d.canonical()).collect();
        assert_eq!(distinct.len(), 10);
        assert!(!diag.repeats);
    }

    #[test]
    fn repair_avoids_history() {
        let s = lookup_space("relgnn").unwrap();
        let history: HashSet<String> = s.enumerate().take(75).map(|d| d.canonical()).collect();
        let mut diag = ParseDiagnostics::default();
        let out = repair_fill(&s, Vec::new(), 6, 3, &history, &mut diag);
        assert!(out.iter().all(|d| !history.contains(&d.canonical())));
        assert!(!diag.repeats);
    }

    #[test]
    fn repair_on_exhausted_space_repeats() {
        let s = SearchSpaceDef::from_toml_str(
            r#"
            space_id = "four"
            version = 1
            connection_candidates = ["c"]
            [[slots]]
            slot_id = "a"
            candidates = ["w", "x", "y", "z"]
            "#,
        )
        .unwrap();
        let history: HashSet<String> = s.enumerate().map(|d| d.canonical()).collect();
        let mut diag = ParseDiagnostics::default();
        let out = repair_fill(&s, Vec::new(), 10, 0, &history, &mut diag);
        assert_eq!(out.len(), 10);
        assert!(diag.repeats);
        assert!(out.iter().all(|d| s.is_valid(d)));
    }
}
