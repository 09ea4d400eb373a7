//! LLM node augmentation: per-node explanation and pseudo-label prompts, a
//! content-addressed response cache, and text embeddings.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evaluation::worker::WorkerClient;
use crate::llm::{Conversation, LlmError, LlmGateway};
use crate::runio::GraphDataset;
use crate::util::fnv1a;

pub const DEFAULT_CHAR_CAP: usize = 4000;
pub const TRUNCATION_MARKER: &str = "[... text truncated ...]";
pub const EXPLAIN_MARKER: &str = "#EXPLAIN";
pub const LABELS_MARKER: &str = "#LABELS";
pub const SUMMARIZE_MARKER: &str = "#SUMMARIZE";
const OPEN: &str = "<<<";
const CLOSE: &str = ">>>";

const SYSTEM_TEXT: &str = "You are an expert annotator of text-attributed graphs.";

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("node text is empty")]
    EmptyText,
    #[error("graph has no node texts")]
    NoTexts,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("augmentation cache: {0}")]
    Io(String),
    #[error("embedding: {0}")]
    Embed(String),
}

fn push_block(out: &mut String, text: &str, cap: usize) {
    out.push_str(OPEN);
    out.push('\n');
    if text.chars().count() > cap {
        out.extend(text.chars().take(cap));
        out.push('\n');
        out.push_str(TRUNCATION_MARKER);
    } else {
        out.push_str(text);
    }
    out.push('\n');
    out.push_str(CLOSE);
    out.push('\n');
}

/// Prompt asking for an explanation of one node and, when labels are
/// given, a final `Prediction: <label>` line. Text longer than `char_cap`
/// characters is cut and marked.
pub fn build_explanation_prompt(node_text: &str, label_names: &[String], char_cap: usize) -> Result<String, AugmentError> {
    if node_text.trim().is_empty() {
        return Err(AugmentError::EmptyText);
    }
    let mut p = String::from("Below is the text attached to one node of a graph.\n\n");
    push_block(&mut p, node_text, char_cap);
    p.push('\n');
    p.push_str(EXPLAIN_MARKER);
    p.push('\n');
    if label_names.is_empty() {
        p.push_str("Explain in a few sentences what this node is about and which topics it relates to.\n");
    } else {
        p.push_str(&format!("The possible categories are: {}.\n", label_names.join(", ")));
        p.push_str(&format!("{LABELS_MARKER} {}\n", label_names.join("|")));
        p.push_str(
            "Explain in a few sentences which category fits the text and why. Finish with one line \
             of the form\nPrediction: <category>\n",
        );
    }
    Ok(p)
}

/// Unlabeled-graph mode (experimental): asks for a synthetic description
/// summarizing a node's neighborhood.
pub fn build_neighborhood_prompt(node_text: &str, neighbor_texts: &[&str], char_cap: usize) -> Result<String, AugmentError> {
    if node_text.trim().is_empty() {
        return Err(AugmentError::EmptyText);
    }
    let mut p = String::from("Below is the text of a graph node followed by the texts of its neighbors.\n\nNode:\n");
    push_block(&mut p, node_text, char_cap);
    for (i, t) in neighbor_texts.iter().enumerate() {
        p.push_str(&format!("Neighbor {}:\n", i + 1));
        push_block(&mut p, t, char_cap);
    }
    p.push_str(SUMMARIZE_MARKER);
    p.push_str("\nWrite a short description of a new node that captures what this neighborhood has in common.\n");
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Augmentation {
    pub explanation: String,
    pub pseudo_label: Option<String>,
    pub diagnostic: Option<String>,
}

/// Splits a completion into explanation and pseudo-label. The last
/// `Prediction:` line is the label; it must match one of `label_names`
/// ignoring case, otherwise the label is dropped and a diagnostic kept.
pub fn parse_augmentation(completion: &str, label_names: &[String]) -> Augmentation {
    let lines: Vec<&str> = completion.lines().collect();
    let pred_at = lines.iter().rposition(|l| prediction_value(l).is_some());
    let explanation = lines
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != pred_at)
        .map(|(_, l)| *l)
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string();
    let Some(i) = pred_at else {
        return Augmentation {
            explanation,
            pseudo_label: None,
            diagnostic: None,
        };
    };
    let raw = prediction_value(lines[i]).unwrap_or_default();
    let value = raw.trim_matches(|c: char| c == '"' || c == '\'' || c == '`' || c == '*' || c == '.' || c.is_whitespace());
    match label_names.iter().find(|l| l.eq_ignore_ascii_case(value) || l.to_lowercase() == value.to_lowercase()) {
        Some(l) => Augmentation {
            explanation,
            pseudo_label: Some(l.clone()),
            diagnostic: None,
        },
        None => Augmentation {
            explanation,
            pseudo_label: None,
            diagnostic: Some(format!("predicted label {value:?} is not one of [{}]", label_names.join(", "))),
        },
    }
}

fn prediction_value(line: &str) -> Option<&str> {
    let t = line.trim().trim_start_matches(['*', '#', '-', ' ']);
    let head = t.get(..11)?;
    if head.eq_ignore_ascii_case("prediction:") {
        Some(&t[11..])
    } else {
        None
    }
}

/// Mock-model answer for augmentation prompts; `None` for anything else.
pub(crate) fn mock_reply(prompt: &str) -> Option<String> {
    let first = block_after(prompt, 0)?;
    if prompt.contains(SUMMARIZE_MARKER) {
        let mut texts = vec![first.0];
        let mut at = first.1;
        while let Some((t, end)) = block_after(prompt, at) {
            texts.push(t);
            at = end;
        }
        let gist: Vec<String> = texts.iter().skip(1).take(3).map(|t| first_words(t, 4)).collect();
        return Some(format!("A node about {} related to {}.", first_words(texts[0], 6), gist.join("; ")));
    }
    if !prompt.contains(EXPLAIN_MARKER) {
        return None;
    }
    let text = first.0;
    let mut reply = format!("The text is about {}.", first_words(text, 12));
    let labels: Vec<&str> = prompt
        .lines()
        .find_map(|l| l.strip_prefix(LABELS_MARKER))
        .map(|rest| rest.trim().split('|').map(str::trim).filter(|s| !s.is_empty()).collect())
        .unwrap_or_default();
    if !labels.is_empty() {
        let lower = text.to_lowercase();
        let label = labels
            .iter()
            .find(|l| lower.contains(&l.to_lowercase()))
            .copied()
            .unwrap_or(labels[(fnv1a(text.as_bytes()) % labels.len() as u64) as usize]);
        reply.push_str(&format!(" Its wording fits the category {label} best.\nPrediction: {label}"));
    }
    Some(reply)
}

fn block_after(text: &str, from: usize) -> Option<(&str, usize)> {
    let start = text[from..].find(&format!("{OPEN}\n"))? + from + OPEN.len() + 1;
    let end = text[start..].find(&format!("\n{CLOSE}"))? + start;
    Some((&text[start..end], end + CLOSE.len() + 1))
}

fn first_words(text: &str, n: usize) -> String {
    text.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Cache key parts: hash of the node text and of the label set.
pub fn cache_key(text: &str, label_names: &[String]) -> (String, String) {
    (sha256_hex(text.as_bytes()), sha256_hex(label_names.join("\u{1f}").as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CacheEntry {
    text_hash: String,
    label_hash: String,
    completion: String,
}

/// One JSON file per (text, label set) pair under a directory.
#[derive(Debug, Clone)]
pub struct AugmentCache {
    dir: PathBuf,
}

impl AugmentCache {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, AugmentError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| AugmentError::Io(format!("{}: {e}", dir.display())))?;
        Ok(AugmentCache { dir })
    }

    fn path(&self, key: &(String, String)) -> PathBuf {
        let name = sha256_hex(format!("{}:{}", key.0, key.1).as_bytes());
        self.dir.join(format!("{name}.json"))
    }

    pub fn get(&self, key: &(String, String)) -> Result<Option<String>, AugmentError> {
        let path = self.path(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(AugmentError::Io(format!("{}: {e}", path.display()))),
        };
        let entry: CacheEntry =
            serde_json::from_str(&text).map_err(|e| AugmentError::Io(format!("{}: {e}", path.display())))?;
        if (entry.text_hash.as_str(), entry.label_hash.as_str()) != (key.0.as_str(), key.1.as_str()) {
            return Err(AugmentError::Io(format!("{}: key mismatch", path.display())));
        }
        Ok(Some(entry.completion))
    }

    /// Writes through a temporary file and a rename.
    pub fn put(&self, key: &(String, String), completion: &str) -> Result<(), AugmentError> {
        let path = self.path(key);
        let entry = CacheEntry {
            text_hash: key.0.clone(),
            label_hash: key.1.clone(),
            completion: completion.to_string(),
        };
        let tmp = path.with_extension("json.tmp");
        let io = |e: std::io::Error| AugmentError::Io(format!("{}: {e}", path.display()));
        fs::write(&tmp, serde_json::to_string_pretty(&entry).expect("entries serialize")).map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)
    }
}

/// Token-level feature hashing with sign hashing, L2-normalized.
///
/// Tokens are lowercase whitespace-separated words. Empty text gives the
/// zero vector. If signed counts cancel out entirely, unsigned counts are
/// used instead so non-empty text always gets a unit vector.
pub fn hash_embed(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim >= 1, "embedding dim must be >= 1");
    let mut signed = vec![0.0; dim];
    let mut unsigned = vec![0.0; dim];
    let lower = text.to_lowercase();
    let mut tokens: Vec<&str> = lower.split_whitespace().collect();
    if tokens.is_empty() && !text.is_empty() {
        tokens.push(&lower);
    }
    for tok in tokens {
        let h = fnv1a(tok.as_bytes());
        let i = (h % dim as u64) as usize;
        signed[i] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        unsigned[i] += 1.0;
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let v = if norm(&signed) > 0.0 { signed } else { unsigned };
    normalize(v)
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

pub trait Embedder {
    fn embed(&self, texts: &[String], dim: usize) -> Result<Vec<Vec<f64>>, AugmentError>;
}

pub struct HashEmbedder;

impl Embedder for HashEmbedder {
    fn embed(&self, texts: &[String], dim: usize) -> Result<Vec<Vec<f64>>, AugmentError> {
        Ok(texts.iter().map(|t| hash_embed(t, dim)).collect())
    }
}

/// Embeddings from the worker's `embed` endpoint, renormalized.
pub struct WorkerEmbedder(pub Arc<WorkerClient>);

impl Embedder for WorkerEmbedder {
    fn embed(&self, texts: &[String], dim: usize) -> Result<Vec<Vec<f64>>, AugmentError> {
        let vectors = self.0.embed(texts, dim).map_err(|e| AugmentError::Embed(e.to_string()))?;
        if vectors.len() != texts.len() || vectors.iter().any(|v| v.len() != dim) {
            return Err(AugmentError::Embed(format!(
                "worker returned {} vectors for {} texts at dim {dim}",
                vectors.len(),
                texts.len()
            )));
        }
        Ok(vectors.into_iter().map(normalize).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedNode {
    pub node_id: usize,
    pub original_text: String,
    pub explanation_text: String,
    /// Index into the label names.
    pub pseudo_label: Option<usize>,
    pub embedding: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentOptions {
    pub char_cap: usize,
    /// Embedding width; 0 skips embedding.
    pub embed_dim: usize,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions {
            char_cap: DEFAULT_CHAR_CAP,
            embed_dim: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutput {
    pub nodes: Vec<AugmentedNode>,
    pub llm_calls: usize,
    /// (node id, message) for unmatched pseudo-labels.
    pub diagnostics: Vec<(usize, String)>,
}

/// One explanation per node in node-id order. Completions are cached per
/// (text, label set); nodes with identical text share one LLM call. Each
/// new completion is cached as soon as it arrives, so a failure keeps the
/// work done so far.
pub fn augment_graph(
    graph: &GraphDataset,
    label_names: &[String],
    llm: &LlmGateway,
    cache: Option<&AugmentCache>,
    embedder: &dyn Embedder,
    options: &AugmentOptions,
) -> Result<AugmentOutput, AugmentError> {
    let texts = graph.node_texts.as_ref().ok_or(AugmentError::NoTexts)?;
    let mut by_text: HashMap<&str, String> = HashMap::new();
    let mut llm_calls = 0;
    for (i, text) in texts.iter().enumerate() {
        if by_text.contains_key(text.as_str()) {
            continue;
        }
        let key = cache_key(text, label_names);
        let completion = match cache.map(|c| c.get(&key)).transpose()?.flatten() {
            Some(c) => c,
            None => {
                let prompt = build_explanation_prompt(text, label_names, options.char_cap)?;
                let mut conv = Conversation::new(format!("augment-{i}"), SYSTEM_TEXT, &prompt);
                let c = llm.chat(&mut conv)?;
                llm_calls += 1;
                if let Some(cache) = cache {
                    cache.put(&key, &c)?;
                }
                c
            }
        };
        by_text.insert(text, completion);
    }

    let mut nodes = Vec::with_capacity(texts.len());
    let mut diagnostics = Vec::new();
    for (i, text) in texts.iter().enumerate() {
        let a = parse_augmentation(&by_text[text.as_str()], label_names);
        if let Some(d) = a.diagnostic {
            diagnostics.push((i, d));
        }
        nodes.push(AugmentedNode {
            node_id: i,
            original_text: text.clone(),
            explanation_text: a.explanation,
            pseudo_label: a.pseudo_label.and_then(|l| label_names.iter().position(|n| *n == l)),
            embedding: None,
        });
    }
    if options.embed_dim > 0 {
        let joined: Vec<String> = nodes
            .iter()
            .map(|n| format!("{}\n{}", n.original_text, n.explanation_text))
            .collect();
        let vectors = embedder.embed(&joined, options.embed_dim)?;
        for (n, v) in nodes.iter_mut().zip(vectors) {
            n.embedding = Some(v);
        }
    }
    Ok(AugmentOutput {
        nodes,
        llm_calls,
        diagnostics,
    })
}
