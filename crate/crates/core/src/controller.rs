//! The search loop: prompt, generate, parse and repair, evaluate, feed the
//! scores back, repeat.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicBool, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{EvalError, EvaluationRecord, Evaluator};
use crate::llm::{Conversation, LlmError, LlmGateway};
use crate::prompt::{
    build_search_prompt, parse_completion, rank_order, repair_fill, HistoryPolicy, ParseDiagnostics, TaskMeta,
};
use crate::space::{ArchitectureDescriptor, SearchSpaceDef};
use crate::util::mix_seed;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("search aborted by user")]
    Aborted,
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
    #[error("writing run output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub iterations: usize,
    pub per_iteration: usize,
    pub repeats: usize,
    pub seed: u64,
    pub parallel_evals: usize,
    pub keep_best: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            iterations: 15,
            per_iteration: 10,
            repeats: 3,
            seed: 0,
            parallel_evals: 4,
            keep_best: crate::prompt::DEFAULT_KEEP_BEST,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        for (name, v) in [
            ("iterations", self.iterations),
            ("per_iteration", self.per_iteration),
            ("repeats", self.repeats),
            ("parallel_evals", self.parallel_evals),
        ] {
            if v < 1 {
                return Err(SearchError::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn history_policy(&self) -> HistoryPolicy {
        HistoryPolicy {
            keep_best: self.keep_best,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ControllerConfig { seed, ..self.clone() }
    }
}

/// One LLM round trip of an iteration, kept verbatim for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptExchange {
    pub iteration: usize,
    pub prompt: String,
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub seed: u64,
    pub best: EvaluationRecord,
    pub trace: Vec<EvaluationRecord>,
    /// Best validation metric found up to and including each iteration.
    pub per_iteration_best: Vec<f64>,
    /// `test_acc` of the record behind each `per_iteration_best` entry,
    /// when the backend reports one. Never used for selection.
    pub per_iteration_best_test: Vec<Option<f64>>,
    pub exchanges: Vec<PromptExchange>,
    pub diagnostics: Vec<ParseDiagnostics>,
}

/// Receives run output as it is produced, so a crash loses at most the
/// record being written.
pub trait SearchObserver {
    fn on_exchange(&mut self, _exchange: &PromptExchange) -> std::io::Result<()> {
        Ok(())
    }
    fn on_record(&mut self, _record: &EvaluationRecord) -> std::io::Result<()> {
        Ok(())
    }
}

pub struct NoObserver;

impl SearchObserver for NoObserver {}

const REASK: &str = "Your previous answer contained no architecture I could read. Answer again \
with one canonical string per line inside a single ``` fenced block and nothing else.";

/// Options shared by the search entry points beyond [`ControllerConfig`].
#[derive(Default)]
pub struct RunHooks<'a> {
    pub cancel: Option<&'a AtomicBool>,
    pub observer: Option<&'a mut dyn SearchObserver>,
}

impl RunHooks<'_> {
    fn check_cancel(&self) -> Result<(), SearchError> {
        match self.cancel {
            Some(flag) if flag.load(Ordering::SeqCst) => Err(SearchError::Aborted),
            _ => Ok(()),
        }
    }

    fn record(&mut self, rec: &EvaluationRecord) -> Result<(), SearchError> {
        if let Some(o) = self.observer.as_mut() {
            o.on_record(rec)?;
        }
        Ok(())
    }

    fn exchange(&mut self, ex: &PromptExchange) -> Result<(), SearchError> {
        if let Some(o) = self.observer.as_mut() {
            o.on_exchange(ex)?;
        }
        Ok(())
    }
}

pub fn run_search(
    cfg: &ControllerConfig,
    space: &SearchSpaceDef,
    llm: &LlmGateway,
    evaluator: &Evaluator,
    task: &TaskMeta,
) -> Result<SearchResult, SearchError> {
    run_search_with(cfg, space, llm, evaluator, task, RunHooks::default())
}

pub fn run_search_with(
    cfg: &ControllerConfig,
    space: &SearchSpaceDef,
    llm: &LlmGateway,
    evaluator: &Evaluator,
    task: &TaskMeta,
    mut hooks: RunHooks<'_>,
) -> Result<SearchResult, SearchError> {
    cfg.validate()?;
    let n = cfg.per_iteration;
    let mut trace: Vec<EvaluationRecord> = Vec::with_capacity(cfg.iterations * n);
    let mut exchanges = Vec::new();
    let mut diagnostics = Vec::new();
    for t in 0..cfg.iterations {
        hooks.check_cancel()?;
        let bundle = build_search_prompt(space, &trace, n, task, t, cfg.seed, cfg.history_policy());
        let mut conv = Conversation::new(format!("search-{}-{t}", cfg.seed), &bundle.system_text, &bundle.user_text);
        let completion = llm.chat(&mut conv)?;
        let ex = PromptExchange {
            iteration: t,
            prompt: bundle.user_text.clone(),
            completion: completion.clone(),
        };
        hooks.exchange(&ex)?;
        exchanges.push(ex);
        let (mut parsed, mut diag) = parse_completion(space, &completion, n);
        if parsed.is_empty() {
            conv.push_user(&format!("{REASK}\n\n{}", bundle.user_text));
            let retry = llm.chat(&mut conv)?;
            let ex = PromptExchange {
                iteration: t,
                prompt: conv.last_user_text().unwrap_or_default().to_string(),
                completion: retry.clone(),
            };
            hooks.exchange(&ex)?;
            exchanges.push(ex);
            let (p, d) = parse_completion(space, &retry, n);
            parsed = p;
            diag.rejected_lines.extend(d.rejected_lines);
            diag.truncated += d.truncated;
            diag.accepted = d.accepted;
        }
        let seen: HashSet<String> = trace.iter().map(|r| r.canonical.clone()).collect();
        let proposals = repair_fill(space, parsed, n, mix_seed(cfg.seed, t as u64), &seen, &mut diag);
        diagnostics.push(diag);
        for rec in evaluate_batch(evaluator, &proposals, cfg.seed, t, cfg.parallel_evals)? {
            hooks.record(&rec)?;
            trace.push(rec);
        }
    }
    Ok(finish(cfg.seed, trace, exchanges, diagnostics))
}

/// Scores `batch` in order. Distinct subjects run concurrently, at most
/// `parallel` at a time; repeats are then served from the cache. The first
/// failure in proposal order is returned.
pub fn evaluate_batch(
    evaluator: &Evaluator,
    batch: &[ArchitectureDescriptor],
    seed: u64,
    iteration: usize,
    parallel: usize,
) -> Result<Vec<EvaluationRecord>, EvalError> {
    let mut first_at: HashMap<String, usize> = HashMap::new();
    let mut distinct = Vec::new();
    for (i, d) in batch.iter().enumerate() {
        first_at.entry(d.canonical()).or_insert_with(|| {
            distinct.push(i);
            i
        });
    }
    let mut results: Vec<Option<Result<EvaluationRecord, EvalError>>> = vec![None; batch.len()];
    for chunk in distinct.chunks(parallel.max(1)) {
        let out: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&i| s.spawn(move || evaluator.evaluate(&batch[i], seed, iteration)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("evaluation thread panicked"))
                .collect()
        });
        for (&i, r) in chunk.iter().zip(out) {
            results[i] = Some(r);
        }
    }
    let mut records = Vec::with_capacity(batch.len());
    for (i, d) in batch.iter().enumerate() {
        let r = match results[i].take() {
            Some(r) => r,
            None => evaluator.evaluate(d, seed, iteration),
        };
        records.push(r?);
    }
    Ok(records)
}

fn finish(
    seed: u64,
    trace: Vec<EvaluationRecord>,
    exchanges: Vec<PromptExchange>,
    diagnostics: Vec<ParseDiagnostics>,
) -> SearchResult {
    let best = best_record(&trace).expect("T·N >= 1 records").clone();
    let per_iter = best_so_far_records(&trace);
    SearchResult {
        seed,
        best,
        per_iteration_best: per_iter.iter().map(|r| r.metric_value).collect(),
        per_iteration_best_test: per_iter.iter().map(|r| r.aux_metrics.get("test_acc").copied()).collect(),
        trace,
        exchanges,
        diagnostics,
    }
}

/// Highest metric; the earliest record wins ties.
pub fn best_record(trace: &[EvaluationRecord]) -> Option<&EvaluationRecord> {
    trace.iter().fold(None, |best, r| match best {
        Some(b) if b.metric_value >= r.metric_value => Some(b),
        _ => Some(r),
    })
}

fn best_so_far_records(trace: &[EvaluationRecord]) -> Vec<&EvaluationRecord> {
    let mut out: Vec<&EvaluationRecord> = Vec::new();
    let mut best: Option<&EvaluationRecord> = None;
    let mut i = 0;
    while i < trace.len() {
        let it = trace[i].iteration;
        while i < trace.len() && trace[i].iteration == it {
            if best.is_none_or(|b| trace[i].metric_value > b.metric_value) {
                best = Some(&trace[i]);
            }
            i += 1;
        }
        out.push(best.expect("group is non-empty"));
    }
    out
}

/// Running maximum per iteration group of a trace ordered by iteration.
pub fn best_so_far(trace: &[EvaluationRecord]) -> Vec<f64> {
    best_so_far_records(trace).iter().map(|r| r.metric_value).collect()
}

/// Results of `repeats` searches with seeds `seed, seed+1, ...`.
#[derive(Debug, Clone)]
pub struct RepeatedResult {
    pub runs: Vec<SearchResult>,
    pub best_index: usize,
}

impl RepeatedResult {
    pub fn best(&self) -> &SearchResult {
        &self.runs[self.best_index]
    }
}

/// Max best metric across runs; the lowest seed wins ties.
pub fn pick_best_run(runs: &[SearchResult]) -> usize {
    let mut best = 0;
    for (i, r) in runs.iter().enumerate().skip(1) {
        let b = &runs[best];
        if r.best.metric_value > b.best.metric_value
            || (r.best.metric_value == b.best.metric_value && r.seed < b.seed)
        {
            best = i;
        }
    }
    best
}

pub fn run_repeated(
    cfg: &ControllerConfig,
    space: &SearchSpaceDef,
    llm: &LlmGateway,
    evaluator: &Evaluator,
    task: &TaskMeta,
) -> Result<RepeatedResult, SearchError> {
    cfg.validate()?;
    let mut runs = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        runs.push(run_search(&cfg.with_seed(cfg.seed + r as u64), space, llm, evaluator, task)?);
    }
    let best_index = pick_best_run(&runs);
    Ok(RepeatedResult { runs, best_index })
}

/// Baseline: `T·N` seeded-random descriptors in `T` batches of `N`. No
/// descriptor repeats until the whole space has been drawn.
pub fn random_search(
    cfg: &ControllerConfig,
    space: &SearchSpaceDef,
    evaluator: &Evaluator,
) -> Result<SearchResult, SearchError> {
    random_search_with(cfg, space, evaluator, RunHooks::default())
}

pub fn random_search_with(
    cfg: &ControllerConfig,
    space: &SearchSpaceDef,
    evaluator: &Evaluator,
    mut hooks: RunHooks<'_>,
) -> Result<SearchResult, SearchError> {
    cfg.validate()?;
    let mut draws = UniqueDraws::new(space, cfg.seed);
    let mut trace = Vec::with_capacity(cfg.iterations * cfg.per_iteration);
    for t in 0..cfg.iterations {
        hooks.check_cancel()?;
        let batch: Vec<_> = (0..cfg.per_iteration).map(|_| draws.next_descriptor()).collect();
        for rec in evaluate_batch(evaluator, &batch, cfg.seed, t, cfg.parallel_evals)? {
            hooks.record(&rec)?;
            trace.push(rec);
        }
    }
    Ok(finish(cfg.seed, trace, Vec::new(), Vec::new()))
}

/// Sampling without replacement that starts over once the space is used up.
struct UniqueDraws<'a> {
    space: &'a SearchSpaceDef,
    rng: ChaCha8Rng,
    seen: HashSet<String>,
    size: u128,
}

impl<'a> UniqueDraws<'a> {
    fn new(space: &'a SearchSpaceDef, seed: u64) -> Self {
        UniqueDraws {
            space,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seen: HashSet::new(),
            size: space.size(),
        }
    }

    fn next_descriptor(&mut self) -> ArchitectureDescriptor {
        if self.seen.len() as u128 >= self.size {
            self.seen.clear();
        }
        loop {
            let d = self.space.sample(&mut self.rng);
            if self.seen.insert(d.canonical()) {
                return d;
            }
        }
    }
}

/// Records sorted best first, as the prompt shows them.
pub fn ranked(trace: &[EvaluationRecord]) -> Vec<&EvaluationRecord> {
    let mut v: Vec<_> = trace.iter().collect();
    v.sort_by(|a, b| rank_order(a, b));
    v
}
