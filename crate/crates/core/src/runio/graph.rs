//! `gnas-graph/1` graph files.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const GRAPH_FORMAT: &str = "gnas-graph/1";

/// The 10-node, two-class graph shipped with the binary.
pub const BUNDLED_GRAPH: &str = include_str!("../../data/toy10.json");
pub const BUNDLED_GRAPH_NAME: &str = "toy10";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("graph file: {0}")]
    Parse(String),
    #[error("edge {index} ({u}, {v}) is out of range for {num_nodes} nodes")]
    EdgeOutOfRange {
        index: usize,
        u: usize,
        v: usize,
        num_nodes: usize,
    },
    #[error("{field} has {found} entries, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid splits: {0}")]
    InvalidSplits(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDataset {
    pub format: String,
    pub name: String,
    pub num_nodes: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, rename = "features", skip_serializing_if = "Option::is_none")]
    pub node_features: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_texts: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<i64>>,
    /// Names for label ids, used by augmentation prompts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_types: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_types: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<Splits>,
}

impl GraphDataset {
    pub fn empty(name: &str, num_nodes: usize) -> Self {
        GraphDataset {
            format: GRAPH_FORMAT.into(),
            name: name.into(),
            num_nodes,
            edges: Vec::new(),
            node_features: None,
            node_texts: None,
            labels: None,
            label_names: None,
            node_types: None,
            edge_types: None,
            splits: None,
        }
    }

    /// Width of the feature rows, if any.
    pub fn feature_dim(&self) -> Option<usize> {
        self.node_features.as_ref().and_then(|f| f.first()).map(Vec::len)
    }

    pub fn splits(&self) -> &Splits {
        self.splits.as_ref().expect("loaded graphs always have splits")
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.format != GRAPH_FORMAT {
            return Err(GraphError::Parse(format!(
                "format is {:?}, expected {GRAPH_FORMAT:?}",
                self.format
            )));
        }
        let n = self.num_nodes;
        for (index, &[u, v]) in self.edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(GraphError::EdgeOutOfRange {
                    index,
                    u,
                    v,
                    num_nodes: n,
                });
            }
        }
        let check = |field, found: Option<usize>, expected| match found {
            Some(found) if found != expected => Err(GraphError::LengthMismatch { field, expected, found }),
            _ => Ok(()),
        };
        check("features", self.node_features.as_ref().map(Vec::len), n)?;
        check("node_texts", self.node_texts.as_ref().map(Vec::len), n)?;
        check("labels", self.labels.as_ref().map(Vec::len), n)?;
        check("node_types", self.node_types.as_ref().map(Vec::len), n)?;
        check("edge_types", self.edge_types.as_ref().map(Vec::len), self.edges.len())?;
        if let (Some(rows), Some(width)) = (&self.node_features, self.feature_dim()) {
            for row in rows {
                check("feature row", Some(row.len()), width)?;
                if row.iter().any(|x| !x.is_finite()) {
                    return Err(GraphError::Parse("features contain non-finite values".into()));
                }
            }
        }
        if let (Some(labels), Some(names)) = (&self.labels, &self.label_names) {
            if let Some(l) = labels.iter().find(|&&l| l >= names.len() as i64) {
                return Err(GraphError::Parse(format!("label {l} has no entry in label_names")));
            }
        }
        if let Some(s) = &self.splits {
            let mut seen = HashSet::new();
            for id in s.train.iter().chain(&s.val).chain(&s.test) {
                if *id >= n {
                    return Err(GraphError::InvalidSplits(format!("node {id} out of range")));
                }
                if !seen.insert(*id) {
                    return Err(GraphError::InvalidSplits(format!("node {id} is in more than one split")));
                }
            }
        }
        Ok(())
    }
}

/// Seeded 60/20/20 split: `floor(0.6 n)` train, `floor(0.2 n)` val, the
/// remainder test, each sorted.
pub fn auto_split(num_nodes: usize, seed: u64) -> Splits {
    let mut ids: Vec<usize> = (0..num_nodes).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = num_nodes * 6 / 10;
    let n_val = num_nodes * 2 / 10;
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    Splits {
        train: sorted(&ids[..n_train]),
        val: sorted(&ids[n_train..n_train + n_val]),
        test: sorted(&ids[n_train + n_val..]),
    }
}

pub fn parse_graph(text: &str, split_seed: u64) -> Result<GraphDataset, GraphError> {
    let mut g: GraphDataset = serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
    g.validate()?;
    if g.splits.is_none() {
        g.splits = Some(auto_split(g.num_nodes, split_seed));
    }
    Ok(g)
}

/// Loads and validates a graph file; missing splits are drawn with seed 0.
pub fn load_graph(path: impl AsRef<Path>) -> Result<GraphDataset, GraphError> {
    load_graph_seeded(path, 0)
}

pub fn load_graph_seeded(path: impl AsRef<Path>, split_seed: u64) -> Result<GraphDataset, GraphError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_graph(&text, split_seed)
}

pub fn bundled_graph() -> GraphDataset {
    parse_graph(BUNDLED_GRAPH, 0).expect("bundled graph is valid")
}
