//! Hyperparameter optimization over explicit grids, reusing the search loop.
//!
//! A hyperparameter space is an ordinary [`SearchSpaceDef`] with one slot per
//! parameter and a single `grid` connection motif, so the codec, prompts and
//! repair logic all carry over unchanged.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Number, Value};

use crate::controller::{random_search, run_search, ControllerConfig, SearchError, SearchResult};
use crate::evaluation::{Backend, EvalError, EvalJob, Evaluator, Score};
use crate::llm::LlmGateway;
use crate::prompt::TaskMeta;
use crate::space::{decode, lookup_space, ArchitectureDescriptor, SearchSpaceDef, SlotDef, SpaceDocument, SpaceError, TaskKind};
use crate::util::{fnv1a, mix_seed};

pub const HP_SPACE_ID: &str = "hp";
pub const GRID_MOTIF: &str = "grid";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Categorical,
    NumericGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParam {
    pub name: String,
    pub kind: ParamKind,
    pub values: Vec<String>,
}

impl HyperParam {
    /// Kind is numeric-grid when every value parses as a number.
    pub fn new(name: &str, values: &[&str]) -> Self {
        let values: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        HyperParam {
            name: name.to_string(),
            kind: infer_kind(&values),
            values,
        }
    }
}

fn infer_kind(values: &[String]) -> ParamKind {
    if !values.is_empty() && values.iter().all(|v| v.parse::<f64>().is_ok_and(f64::is_finite)) {
        ParamKind::NumericGrid
    } else {
        ParamKind::Categorical
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperparamSpaceDef {
    params: Vec<HyperParam>,
    space: SearchSpaceDef,
}

/// Builds the `hp` space for `params`; every value becomes a candidate op.
pub fn build_hp_space(params: &[HyperParam]) -> Result<HyperparamSpaceDef, SpaceError> {
    if params.is_empty() {
        return Err(SpaceError::MalformedSpace("hyperparameter space has no params".into()));
    }
    for p in params {
        if p.values.is_empty() {
            return Err(SpaceError::MalformedSpace(format!("param {:?} has no values", p.name)));
        }
    }
    let doc = SpaceDocument {
        space_id: HP_SPACE_ID.into(),
        version: 1,
        task_kinds: TaskKind::ALL.to_vec(),
        slots: params
            .iter()
            .map(|p| SlotDef {
                slot_id: p.name.clone(),
                candidates: p.values.clone(),
                doc: Vec::new(),
            })
            .collect(),
        connection_candidates: vec![GRID_MOTIF.into()],
        operation_prompt: "Each slot is a training hyperparameter and each candidate one of its allowed values.".into(),
        connection_prompt: "The only connection motif is grid.".into(),
        example_prompt: String::new(),
    };
    HyperparamSpaceDef::from_space(SearchSpaceDef::from_document(doc)?)
}

/// lr, dropout, batch, epochs and layers, each grid containing the usual
/// defaults (5e-4, 0.5, 128, 200, 2). 24 configs.
pub fn default_hp_space() -> HyperparamSpaceDef {
    build_hp_space(&[
        HyperParam::new("lr", &["1e-4", "5e-4", "1e-3"]),
        HyperParam::new("dropout", &["0.0", "0.5"]),
        HyperParam::new("batch", &["64", "128"]),
        HyperParam::new("epochs", &["100", "200"]),
        HyperParam::new("layers", &["2"]),
    ])
    .expect("default grid is well formed")
}

/// Default training hyperparameters as sent to workers.
pub fn default_hyperparams_json() -> Map<String, Value> {
    let hp = default_hp_space();
    hp.to_json(&hp.default_config())
}

impl HyperparamSpaceDef {
    /// Wraps a space loaded from a space-definition document.
    pub fn from_space(space: SearchSpaceDef) -> Result<Self, SpaceError> {
        if space.connection_candidates().len() != 1 {
            return Err(SpaceError::MalformedSpace(
                "hyperparameter spaces take exactly one connection motif".into(),
            ));
        }
        let params = space
            .slots()
            .iter()
            .map(|s| HyperParam {
                name: s.slot_id.clone(),
                kind: infer_kind(&s.candidates),
                values: s.candidates.clone(),
            })
            .collect();
        Ok(HyperparamSpaceDef { params, space })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SpaceError> {
        Self::from_space(SearchSpaceDef::load(path)?)
    }

    pub fn params(&self) -> &[HyperParam] {
        &self.params
    }

    pub fn space(&self) -> &SearchSpaceDef {
        &self.space
    }

    pub fn into_space(self) -> SearchSpaceDef {
        self.space
    }

    pub fn size(&self) -> u128 {
        self.space.size()
    }

    /// The config nearest the common defaults: each param takes the default
    /// value when its grid has it, else its first value.
    pub fn default_config(&self) -> ArchitectureDescriptor {
        let defaults = [("lr", "5e-4"), ("dropout", "0.5"), ("batch", "128"), ("epochs", "200"), ("layers", "2")];
        let mut d = self.space.first_descriptor();
        for (name, value) in defaults {
            if let Some(slot) = self.space.slot(name) {
                if slot.index_of(value).is_some() {
                    d.assignments.insert(name.into(), value.into());
                }
            }
        }
        d
    }

    pub fn decode(&self, canonical: &str) -> Result<ArchitectureDescriptor, SpaceError> {
        decode(&self.space, canonical)
    }

    /// Assignments as JSON: integers where the value is one, other numbers
    /// as floats, the rest as strings.
    pub fn to_json(&self, config: &ArchitectureDescriptor) -> Map<String, Value> {
        config
            .assignments
            .iter()
            .map(|(k, v)| {
                let value = if let Ok(i) = v.parse::<i64>() {
                    Value::Number(i.into())
                } else if let Some(n) = v.parse::<f64>().ok().and_then(Number::from_f64) {
                    Value::Number(n)
                } else {
                    Value::String(v.clone())
                };
                (k.clone(), value)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct HpoResult {
    pub best_config: ArchitectureDescriptor,
    pub hyperparams: Map<String, Value>,
    pub search: SearchResult,
}

fn check_setup(evaluator: &Evaluator, fixed_arch: &ArchitectureDescriptor) -> Result<(), SearchError> {
    match evaluator.fixed_arch() {
        Some(a) if a == fixed_arch => {}
        _ => {
            return Err(SearchError::InvalidConfig(
                "evaluator was not built with Evaluator::for_hyperparams for this architecture".into(),
            ))
        }
    }
    if let Ok(space) = lookup_space(&fixed_arch.qualified_id()) {
        if let Err(v) = space.validate(fixed_arch) {
            return Err(SearchError::InvalidConfig(format!(
                "fixed architecture is invalid: {}",
                crate::space::join_violations(&v)
            )));
        }
    }
    Ok(())
}

fn finish(hp: &HyperparamSpaceDef, search: SearchResult) -> Result<HpoResult, SearchError> {
    let best_config = hp
        .decode(&search.best.canonical)
        .map_err(|e| SearchError::InvalidConfig(e.to_string()))?;
    Ok(HpoResult {
        hyperparams: hp.to_json(&best_config),
        best_config,
        search,
    })
}

/// The search loop over `hp_space`, every config training `fixed_arch`.
/// `evaluator` must come from [`Evaluator::for_hyperparams`].
pub fn run_hpo(
    cfg: &ControllerConfig,
    hp_space: &HyperparamSpaceDef,
    llm: &LlmGateway,
    evaluator: &Evaluator,
    fixed_arch: &ArchitectureDescriptor,
    task: &TaskMeta,
) -> Result<HpoResult, SearchError> {
    check_setup(evaluator, fixed_arch)?;
    let search = run_search(cfg, hp_space.space(), llm, evaluator, task)?;
    finish(hp_space, search)
}

/// Random-search HPO baseline.
pub fn random_hpo(
    cfg: &ControllerConfig,
    hp_space: &HyperparamSpaceDef,
    evaluator: &Evaluator,
    fixed_arch: &ArchitectureDescriptor,
) -> Result<HpoResult, SearchError> {
    check_setup(evaluator, fixed_arch)?;
    let search = random_search(cfg, hp_space.space(), evaluator)?;
    finish(hp_space, search)
}

/// Backend adapter that tunes hyperparameters for every candidate: each
/// architecture is scored as the best of `budget` distinct random configs.
pub struct PerCandidateHpo {
    inner: Arc<dyn Backend>,
    hp: HyperparamSpaceDef,
    budget: usize,
}

impl PerCandidateHpo {
    pub fn new(inner: Arc<dyn Backend>, hp: HyperparamSpaceDef, budget: usize) -> Self {
        PerCandidateHpo {
            inner,
            hp,
            budget: budget.max(1),
        }
    }

    /// Configs tried for `job`; depends only on the job's canonical and seed.
    pub fn configs_for(&self, job: &EvalJob) -> Vec<ArchitectureDescriptor> {
        let seed = mix_seed(job.seed, fnv1a(job.subject.canonical().as_bytes()));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut all: Vec<_> = self.hp.space().enumerate().collect();
        all.shuffle(&mut rng);
        all.truncate(self.budget);
        all
    }
}

impl Backend for PerCandidateHpo {
    fn id(&self) -> String {
        format!("{}+hpo{}", self.inner.id(), self.budget)
    }

    fn metric_name(&self) -> &str {
        self.inner.metric_name()
    }

    fn score(&self, job: &EvalJob) -> Result<Score, EvalError> {
        let mut best: Option<Score> = None;
        let mut wall = 0.0;
        for config in self.configs_for(job) {
            let inner_job = EvalJob {
                hyperparams: self.hp.to_json(&config),
                ..job.clone()
            };
            let s = self.inner.score(&inner_job)?;
            wall += s.wall_time_s;
            if best.as_ref().is_none_or(|b| s.value > b.value) {
                best = Some(s);
            }
        }
        let mut best = best.expect("budget >= 1");
        best.wall_time_s = wall;
        Ok(best)
    }
}
