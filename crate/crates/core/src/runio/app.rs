//! The work behind each CLI subcommand, callable in-process.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};

use super::config::{EvaluatorSpec, RunConfig};
use super::graph::{bundled_graph, load_graph, GraphDataset, BUNDLED_GRAPH_NAME};
use super::persist::RunWriter;
use crate::augment::{augment_graph, AugmentCache, AugmentOptions, Embedder, HashEmbedder, WorkerEmbedder};
use crate::controller::{pick_best_run, random_search_with, run_search_with, RunHooks, SearchResult};
use crate::evaluation::oracle::{OracleBackend, OracleTable};
use crate::evaluation::surrogate::{SurrogateBackend, SurrogateWeights};
use crate::evaluation::worker::{WorkerBackend, WorkerClient, WorkerOptions};
use crate::evaluation::{Backend, Evaluator};
use crate::hpo::{default_hp_space, random_hpo, run_hpo, HyperparamSpaceDef, PerCandidateHpo};
use crate::llm::LlmGateway;
use crate::prompt::TaskMeta;
use crate::space::{decode, lookup_space, resolve_space, split_header, SearchSpaceDef, TaskKind};

/// A mistake in how the program was invoked, reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Loads the configured graph (the bundled one when no input is set).
pub fn load_input(cfg: &RunConfig) -> Result<GraphDataset> {
    let g = match &cfg.input {
        Some(p) => load_graph(p).with_context(|| format!("loading graph {}", p.display()))?,
        None => bundled_graph(),
    };
    if let (Some(want), Some(have)) = (cfg.in_dim, g.feature_dim()) {
        if want != have {
            return Err(usage(format!("in_dim is {want} but the graph's feature rows have width {have}")));
        }
    }
    Ok(g)
}

/// Name or path the worker should load the dataset from.
fn dataset_ref(cfg: &RunConfig) -> String {
    match &cfg.input {
        Some(p) => p.display().to_string(),
        None => BUNDLED_GRAPH_NAME.to_string(),
    }
}

pub fn build_backend(
    spec: &EvaluatorSpec,
    space: &SearchSpaceDef,
    dataset: &str,
    task: TaskKind,
) -> Result<Arc<dyn Backend>> {
    Ok(match spec {
        EvaluatorSpec::Surrogate(None) => {
            let w = SurrogateWeights::builtin(space.space_id()).ok_or_else(|| {
                usage(format!(
                    "no built-in surrogate for {}; pass surrogate:<weights.json>",
                    space.qualified_id()
                ))
            })?;
            Arc::new(SurrogateBackend::new(w, space)?)
        }
        EvaluatorSpec::Surrogate(Some(path)) => Arc::new(SurrogateBackend::new(SurrogateWeights::load(path)?, space)?),
        EvaluatorSpec::Oracle(path) => Arc::new(OracleBackend::new(OracleTable::load(path, space)?)),
        EvaluatorSpec::Worker(cmd) => {
            let client = WorkerClient::spawn(cmd, WorkerOptions::default())?;
            Arc::new(WorkerBackend::new(Arc::new(client), dataset, task.as_str()))
        }
    })
}

fn resolve(name: &str) -> Result<Arc<SearchSpaceDef>> {
    resolve_space(name).map_err(|e| usage(e.to_string()))
}

fn task_meta(cfg: &RunConfig, graph: &GraphDataset, task: TaskKind, metric: &str) -> TaskMeta {
    let dataset_name = if cfg.dataset_name.is_empty() {
        graph.name.clone()
    } else {
        cfg.dataset_name.clone()
    };
    TaskMeta {
        dataset_name,
        task: task.as_str().replace('_', " "),
        metric_name: metric.to_string(),
    }
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.output.clone().ok_or_else(|| usage("an output directory is required (--output)"))
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub dir: PathBuf,
    pub runs: Vec<SearchResult>,
    pub best_index: usize,
}

impl SearchOutcome {
    pub fn best(&self) -> &SearchResult {
        &self.runs[self.best_index]
    }
}

/// `search`: `repeats` runs streamed into one run directory.
pub fn search_command(cfg: &RunConfig, random_baseline: bool, force: bool) -> Result<SearchOutcome> {
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let task = cfg.task().map_err(|e| usage(e.to_string()))?;
    let space = resolve(&cfg.search_space)?;
    if !space.supports(task) {
        return Err(usage(format!("space {} does not support {}", space.qualified_id(), task.as_str())));
    }
    let graph = load_input(cfg)?;
    let spec = cfg.evaluator_spec().map_err(|e| usage(e.to_string()))?;
    let dir = output_dir(cfg)?;
    let mut backend = build_backend(&spec, &space, &dataset_ref(cfg), task)?;
    if cfg.hpo_per_candidate > 0 {
        backend = Arc::new(PerCandidateHpo::new(backend, default_hp_space(), cfg.hpo_per_candidate));
    }
    let meta = task_meta(cfg, &graph, task, backend.metric_name());
    let evaluator = Evaluator::new(backend);
    let llm = LlmGateway::new(cfg.llm.clone())?;
    let mut writer = RunWriter::create(&dir, &cfg.redacted_json(), force)?;
    let mut runs = Vec::new();
    for r in 0..cfg.controller.repeats {
        let c = cfg.controller.with_seed(cfg.controller.seed + r as u64);
        let hooks = RunHooks {
            cancel: None,
            observer: Some(&mut writer),
        };
        let result = if random_baseline {
            random_search_with(&c, &space, &evaluator, hooks)
        } else {
            run_search_with(&c, &space, &llm, &evaluator, &meta, hooks)
        };
        runs.push(result.with_context(|| format!("search run with seed {}", c.seed))?);
    }
    let best_index = pick_best_run(&runs);
    writer.finish(&runs, &runs[best_index])?;
    Ok(SearchOutcome { dir, runs, best_index })
}

/// `hpo`: tunes hyperparameters of the fixed architecture `arch`.
pub fn hpo_command(
    cfg: &RunConfig,
    arch: &str,
    hp_space_file: Option<&Path>,
    random_baseline: bool,
    force: bool,
) -> Result<SearchOutcome> {
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let task = cfg.task().map_err(|e| usage(e.to_string()))?;
    let header = arch.split('|').next().unwrap_or_default();
    let (space_id, version) = split_header(header).map_err(|e| usage(format!("--arch: {e}")))?;
    let arch_space = lookup_space(&format!("{space_id}:v{version}")).map_err(|e| usage(e.to_string()))?;
    let fixed = decode(&arch_space, arch).map_err(|e| usage(format!("--arch: {e}")))?;
    let hp = match hp_space_file {
        Some(p) => HyperparamSpaceDef::load(p).map_err(|e| usage(e.to_string()))?,
        None => default_hp_space(),
    };
    let graph = load_input(cfg)?;
    let spec = cfg.evaluator_spec().map_err(|e| usage(e.to_string()))?;
    let dir = output_dir(cfg)?;
    let backend = build_backend(&spec, hp.space(), &dataset_ref(cfg), task)?;
    let meta = task_meta(cfg, &graph, task, backend.metric_name());
    let evaluator = Evaluator::for_hyperparams(backend, fixed.clone(), hp.clone());
    let llm = LlmGateway::new(cfg.llm.clone())?;
    let mut writer = RunWriter::create(&dir, &cfg.redacted_json(), force)?;
    let mut runs = Vec::new();
    for r in 0..cfg.controller.repeats {
        let c = cfg.controller.with_seed(cfg.controller.seed + r as u64);
        let out = if random_baseline {
            random_hpo(&c, &hp, &evaluator, &fixed)?
        } else {
            run_hpo(&c, &hp, &llm, &evaluator, &fixed, &meta)?
        };
        for ex in &out.search.exchanges {
            writer.write_exchange(ex)?;
        }
        for rec in &out.search.trace {
            writer.write_record(rec)?;
        }
        runs.push(out.search);
    }
    let best_index = pick_best_run(&runs);
    writer.finish(&runs, &runs[best_index])?;
    Ok(SearchOutcome { dir, runs, best_index })
}

#[derive(Debug, Clone)]
pub struct AugmentCommand {
    pub labels: Option<Vec<String>>,
    pub embed_dim: usize,
    /// `hash` or `worker:<cmd>`.
    pub embedder: String,
    pub char_cap: usize,
}

/// `augment`: writes `<output>/augmented.jsonl` and
/// `<output>/pseudo_labels.csv`, caching completions under `<output>/aug/`.
/// Returns the number of LLM calls made.
pub fn augment_command(cfg: &RunConfig, cmd: &AugmentCommand) -> Result<usize> {
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let graph = load_input(cfg)?;
    if graph.node_texts.is_none() {
        return Err(usage("the graph has no node_texts to augment"));
    }
    let labels = cmd
        .labels
        .clone()
        .or_else(|| graph.label_names.clone())
        .unwrap_or_default();
    let dir = output_dir(cfg)?;
    let cache = AugmentCache::open(dir.join("aug"))?;
    let embedder: Box<dyn Embedder> = match cmd.embedder.split_once(':') {
        None if cmd.embedder == "hash" => Box::new(HashEmbedder),
        Some(("worker", c)) if !c.is_empty() => Box::new(WorkerEmbedder(Arc::new(WorkerClient::spawn(
            c,
            WorkerOptions::default(),
        )?))),
        _ => bail!(UsageError(format!("embedder {:?}; expected hash or worker:<cmd>", cmd.embedder))),
    };
    let llm = LlmGateway::new(cfg.llm.clone())?;
    let options = AugmentOptions {
        char_cap: cmd.char_cap,
        embed_dim: cmd.embed_dim,
    };
    let out = augment_graph(&graph, &labels, &llm, Some(&cache), embedder.as_ref(), &options)?;
    let mut jsonl = String::new();
    let mut csv = String::from("node_id,pseudo_label,pseudo_label_name\n");
    for n in &out.nodes {
        jsonl.push_str(&serde_json::to_string(n)?);
        jsonl.push('\n');
        let (id, name) = match n.pseudo_label {
            Some(l) => (l.to_string(), labels[l].clone()),
            None => (String::new(), String::new()),
        };
        csv.push_str(&format!("{},{id},{name}\n", n.node_id));
    }
    fs::write(dir.join("augmented.jsonl"), jsonl).context("writing augmented.jsonl")?;
    fs::write(dir.join("pseudo_labels.csv"), csv).context("writing pseudo_labels.csv")?;
    for (node, msg) in &out.diagnostics {
        eprintln!("node {node}: {msg}");
    }
    Ok(out.llm_calls)
}
