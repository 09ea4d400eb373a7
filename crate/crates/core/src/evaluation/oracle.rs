//! Tabular oracle: precomputed canonical → metric lookups.
//!
//! File format: `{"space":"nbg:v1","metric":"val_acc","entries":{"<canonical>":0.8093,…}}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backend, EvalError, EvalJob, Score};
use crate::space::{decode, SearchSpaceDef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleTable {
    pub space: String,
    #[serde(default = "default_metric")]
    pub metric: String,
    pub entries: BTreeMap<String, f64>,
}

fn default_metric() -> String {
    super::DEFAULT_METRIC.to_string()
}

impl OracleTable {
    /// Parses and validates a table. Keys are re-encoded canonically, so
    /// tables written with any segment order load.
    pub fn from_json(text: &str, space: &SearchSpaceDef) -> Result<Self, EvalError> {
        let raw: OracleTable =
            serde_json::from_str(text).map_err(|e| EvalError::Invalid(format!("oracle table: {e}")))?;
        raw.normalized(space)
    }

    pub fn load(path: impl AsRef<Path>, space: &SearchSpaceDef) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, space)
    }

    /// Reads only the `space` field, to find out which space to validate against.
    pub fn peek_space(path: impl AsRef<Path>) -> Result<String, EvalError> {
        #[derive(Deserialize)]
        struct Head {
            space: String,
        }
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
        let head: Head =
            serde_json::from_str(&text).map_err(|e| EvalError::Invalid(format!("oracle table: {e}")))?;
        Ok(head.space)
    }

    fn normalized(self, space: &SearchSpaceDef) -> Result<Self, EvalError> {
        if self.space != space.qualified_id() {
            return Err(EvalError::SpaceMismatch {
                expected: space.qualified_id(),
                found: self.space,
            });
        }
        let mut entries = BTreeMap::new();
        for (key, value) in self.entries {
            let d = decode(space, &key).map_err(|e| EvalError::Invalid(format!("oracle key {key:?}: {e}")))?;
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(EvalError::Invalid(format!("oracle value {value} for {key:?} outside [0, 1]")));
            }
            if entries.insert(d.canonical(), value).is_some() {
                return Err(EvalError::Invalid(format!("oracle key {key:?} listed twice")));
            }
        }
        Ok(OracleTable {
            space: self.space,
            metric: self.metric,
            entries,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tables serialize")
    }

    pub fn lookup(&self, canonical: &str) -> Result<f64, EvalError> {
        self.entries
            .get(canonical)
            .copied()
            .ok_or_else(|| EvalError::ArchNotInTable(canonical.to_string()))
    }

    /// Highest-valued entry; the smallest canonical wins ties.
    pub fn argmax(&self) -> Option<(&str, f64)> {
        self.entries
            .iter()
            .fold(None, |best: Option<(&str, f64)>, (k, &v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((k.as_str(), v)),
            })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub struct OracleBackend {
    table: OracleTable,
}

impl OracleBackend {
    pub fn new(table: OracleTable) -> Self {
        OracleBackend { table }
    }

    pub fn table(&self) -> &OracleTable {
        &self.table
    }
}

impl Backend for OracleBackend {
    fn id(&self) -> String {
        format!("oracle:{}", self.table.space)
    }

    fn metric_name(&self) -> &str {
        &self.table.metric
    }

    fn score(&self, job: &EvalJob) -> Result<Score, EvalError> {
        if job.subject.qualified_id() != self.table.space {
            return Err(EvalError::SpaceMismatch {
                expected: self.table.space.clone(),
                found: job.subject.qualified_id(),
            });
        }
        self.table.lookup(&job.subject.canonical()).map(Score::new)
    }
}
