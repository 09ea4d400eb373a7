//! Additive surrogate scores: `base + Σ weight(slot, op)`, clamped to [0, 1].

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backend, EvalError, EvalJob, Score};
use crate::space::{lookup_space, ArchitectureDescriptor, SearchSpaceDef};

const AUTOGEL: &str = include_str!("../../fixtures/surrogate_autogel.json");
const NBG: &str = include_str!("../../fixtures/surrogate_nbg.json");
const RELGNN: &str = include_str!("../../fixtures/surrogate_relgnn.json");
const HP: &str = include_str!("../../fixtures/surrogate_hp.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateWeights {
    /// Qualified space id, e.g. `autogel:v1`.
    pub space: String,
    pub base: f64,
    pub weights: BTreeMap<String, BTreeMap<String, f64>>,
}

impl SurrogateWeights {
    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Invalid(format!("surrogate weights: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Shipped weights for a built-in space (`autogel`, `nbg`, `relgnn`, `hp`).
    pub fn builtin(space_id: &str) -> Option<Self> {
        let text = match space_id {
            "autogel" => AUTOGEL,
            "nbg" => NBG,
            "relgnn" => RELGNN,
            "hp" => HP,
            _ => return None,
        };
        Some(Self::from_json(text).expect("shipped surrogate weights parse"))
    }

    /// Every `(slot, op)` of `space` must carry a weight and nothing else may.
    pub fn check_against(&self, space: &SearchSpaceDef) -> Result<(), EvalError> {
        if self.space != space.qualified_id() {
            return Err(EvalError::SpaceMismatch {
                expected: self.space.clone(),
                found: space.qualified_id(),
            });
        }
        for slot in space.slots() {
            let w = self
                .weights
                .get(&slot.slot_id)
                .ok_or_else(|| EvalError::Invalid(format!("no weights for slot {:?}", slot.slot_id)))?;
            for op in &slot.candidates {
                if !w.get(op).is_some_and(|v| v.is_finite()) {
                    return Err(EvalError::Invalid(format!(
                        "no finite weight for {}={op}",
                        slot.slot_id
                    )));
                }
            }
            if let Some(extra) = w.keys().find(|op| slot.index_of(op).is_none()) {
                return Err(EvalError::Invalid(format!("weight for unknown op {}={extra}", slot.slot_id)));
            }
        }
        if let Some(extra) = self.weights.keys().find(|s| space.slot(s).is_none()) {
            return Err(EvalError::Invalid(format!("weights for unknown slot {extra:?}")));
        }
        Ok(())
    }

    /// Pure and deterministic. Sums in canonical slot order and snaps the
    /// result to 12 decimals so `0.5 + 0.03 + …` lands on the literal value.
    pub fn score(&self, d: &ArchitectureDescriptor) -> Result<f64, EvalError> {
        if d.qualified_id() != self.space {
            return Err(EvalError::SpaceMismatch {
                expected: self.space.clone(),
                found: d.qualified_id(),
            });
        }
        let mut total = self.base;
        for (slot, op) in &d.assignments {
            let w = self
                .weights
                .get(slot)
                .and_then(|w| w.get(op))
                .ok_or_else(|| EvalError::Invalid(format!("no weight for {slot}={op}")))?;
            total += w;
        }
        let snapped = (total * 1e12).round() / 1e12;
        Ok(snapped.clamp(0.0, 1.0))
    }

    /// The descriptor taking the best-weighted op in every slot (first
    /// candidate on ties). For an additive score this is the global optimum.
    pub fn argmax(&self, space: &SearchSpaceDef) -> ArchitectureDescriptor {
        let mut d = space.first_descriptor();
        for slot in space.slots() {
            let w = &self.weights[&slot.slot_id];
            let mut best = &slot.candidates[0];
            for op in &slot.candidates {
                if w[op] > w[best] {
                    best = op;
                }
            }
            d.assignments.insert(slot.slot_id.clone(), best.clone());
        }
        d
    }
}

pub struct SurrogateBackend {
    weights: SurrogateWeights,
    id: String,
}

impl SurrogateBackend {
    pub fn new(weights: SurrogateWeights, space: &SearchSpaceDef) -> Result<Self, EvalError> {
        weights.check_against(space)?;
        let id = format!("surrogate:{}", weights.space);
        Ok(SurrogateBackend { weights, id })
    }

    /// Backend over the shipped weights of a registered built-in space.
    pub fn builtin(space_id: &str) -> Result<Self, EvalError> {
        let weights = SurrogateWeights::builtin(space_id)
            .ok_or_else(|| EvalError::Invalid(format!("no built-in surrogate for space {space_id:?}")))?;
        let space = lookup_space(space_id).map_err(|e| EvalError::Invalid(e.to_string()))?;
        Self::new(weights, &space)
    }

    pub fn weights(&self) -> &SurrogateWeights {
        &self.weights
    }
}

impl Backend for SurrogateBackend {
    fn id(&self) -> String {
        self.id.clone()
    }

    /// The seed is ignored; the cache still keys on it.
    fn score(&self, job: &EvalJob) -> Result<Score, EvalError> {
        self.weights.score(&job.subject).map(Score::new)
    }
}
