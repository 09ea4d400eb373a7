//! Architecture scoring behind one caching interface.
//!
//! Backends: a tabular [`oracle`], an additive [`surrogate`], and an external
//! trainer process reached through the [`worker`] protocol.

pub mod oracle;
pub mod surrogate;
pub mod worker;

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::hpo::HyperparamSpaceDef;
use crate::space::ArchitectureDescriptor;

pub use oracle::{OracleBackend, OracleTable};
pub use surrogate::{SurrogateBackend, SurrogateWeights};
pub use worker::{HelloInfo, WorkerBackend, WorkerClient, WorkerOptions};

pub const DEFAULT_METRIC: &str = "val_acc";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("architecture {0} is not in the oracle table")]
    ArchNotInTable(String),
    #[error("scorer is for space {expected}, descriptor is from {found}")]
    SpaceMismatch { expected: String, found: String },
    #[error("worker unavailable: {0}")]
    WorkerUnavailable(String),
    #[error("worker error: {0}")]
    WorkerError(String),
    #[error("worker protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("worker did not answer within {0} ms")]
    Timeout(u64),
    #[error("evaluation cache is corrupt: {0}")]
    CacheCorrupt(String),
    #[error("backend returned metric {value} outside [0, 1] for {canonical}")]
    InvalidMetric { canonical: String, value: f64 },
    #[error("invalid evaluator input: {0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// One scored architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub canonical: String,
    pub metric_name: String,
    pub metric_value: f64,
    #[serde(rename = "aux", default)]
    pub aux_metrics: BTreeMap<String, f64>,
    pub evaluator_id: String,
    pub seed: u64,
    pub iteration: usize,
    pub wall_time_s: f64,
    pub cache_hit: bool,
}

impl EvaluationRecord {
    pub fn new(
        canonical: &str,
        metric_name: &str,
        metric_value: f64,
        evaluator_id: &str,
        seed: u64,
        iteration: usize,
    ) -> Self {
        EvaluationRecord {
            canonical: canonical.to_string(),
            metric_name: metric_name.to_string(),
            metric_value,
            aux_metrics: BTreeMap::new(),
            evaluator_id: evaluator_id.to_string(),
            seed,
            iteration,
            wall_time_s: 0.0,
            cache_hit: false,
        }
    }
}

/// What a backend is asked to score.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalJob {
    /// The searched point: an architecture, or a hyperparameter config.
    pub subject: ArchitectureDescriptor,
    /// The architecture to train. Equals `subject` outside HPO.
    pub arch: ArchitectureDescriptor,
    /// Training hyperparameters; empty means backend defaults.
    pub hyperparams: Map<String, Value>,
    pub seed: u64,
    pub iteration: usize,
}

impl EvalJob {
    pub fn for_arch(arch: ArchitectureDescriptor, seed: u64, iteration: usize) -> Self {
        EvalJob {
            subject: arch.clone(),
            arch,
            hyperparams: Map::new(),
            seed,
            iteration,
        }
    }
}

/// Result of one backend call.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Score {
    pub value: f64,
    pub aux: BTreeMap<String, f64>,
    /// Time the backend reports for producing the score. Table lookups and
    /// surrogates report zero so traces stay byte-reproducible.
    pub wall_time_s: f64,
}

impl Score {
    pub fn new(value: f64) -> Self {
        Score {
            value,
            ..Score::default()
        }
    }
}

pub trait Backend: Send + Sync {
    /// Stable id; part of the cache key.
    fn id(&self) -> String;

    fn metric_name(&self) -> &str {
        DEFAULT_METRIC
    }

    fn score(&self, job: &EvalJob) -> Result<Score, EvalError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn metric_name(&self) -> &str {
        (**self).metric_name()
    }

    fn score(&self, job: &EvalJob) -> Result<Score, EvalError> {
        (**self).score(job)
    }
}

/// How searched descriptors become backend jobs.
#[derive(Debug, Clone)]
enum JobShape {
    Architecture,
    /// HPO: the subject is a hyperparameter config for a fixed architecture.
    Hyperparams {
        arch: ArchitectureDescriptor,
        space: Box<HyperparamSpaceDef>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    evaluator_id: String,
    canonical: String,
    seed: u64,
}

type Slot = Arc<Mutex<Option<EvaluationRecord>>>;

/// Caching front of a [`Backend`], keyed by `(evaluator_id, canonical, seed)`.
///
/// Concurrent calls on one key run the backend at most once; the others
/// wait for it and come back as cache hits.
pub struct Evaluator {
    backend: Box<dyn Backend>,
    evaluator_id: String,
    shape: JobShape,
    cache: Mutex<HashMap<CacheKey, Slot>>,
    backend_calls: AtomicUsize,
    store: Option<Mutex<File>>,
}

impl Evaluator {
    pub fn new(backend: impl Backend + 'static) -> Self {
        let evaluator_id = backend.id();
        Evaluator {
            backend: Box::new(backend),
            evaluator_id,
            shape: JobShape::Architecture,
            cache: Mutex::new(HashMap::new()),
            backend_calls: AtomicUsize::new(0),
            store: None,
        }
    }

    /// Evaluator whose subjects are configs of `hp_space`, all applied to
    /// `arch`.
    pub fn for_hyperparams(
        backend: impl Backend + 'static,
        arch: ArchitectureDescriptor,
        hp_space: HyperparamSpaceDef,
    ) -> Self {
        let mut e = Evaluator::new(backend);
        e.evaluator_id = format!("{}@{}", e.evaluator_id, arch.canonical());
        e.shape = JobShape::Hyperparams { arch, space: Box::new(hp_space) };
        e
    }

    /// Persists the cache as JSON lines at `path`, loading any existing
    /// entries first.
    pub fn with_cache_file(mut self, path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        if path.exists() {
            let file = File::open(path).map_err(|e| EvalError::Io(e.to_string()))?;
            let mut cache = self.cache.lock().expect("cache poisoned");
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| EvalError::Io(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let mut rec: EvaluationRecord = serde_json::from_str(&line)
                    .map_err(|e| EvalError::CacheCorrupt(format!("{}:{}: {e}", path.display(), n + 1)))?;
                if !(0.0..=1.0).contains(&rec.metric_value) {
                    return Err(EvalError::CacheCorrupt(format!(
                        "{}:{}: metric {} outside [0, 1]",
                        path.display(),
                        n + 1,
                        rec.metric_value
                    )));
                }
                rec.cache_hit = false;
                let key = CacheKey {
                    evaluator_id: rec.evaluator_id.clone(),
                    canonical: rec.canonical.clone(),
                    seed: rec.seed,
                };
                cache.insert(key, Arc::new(Mutex::new(Some(rec))));
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| EvalError::Io(e.to_string()))?;
        self.store = Some(Mutex::new(file));
        Ok(self)
    }

    /// The architecture an HPO evaluator trains; `None` for architecture search.
    pub fn fixed_arch(&self) -> Option<&ArchitectureDescriptor> {
        match &self.shape {
            JobShape::Architecture => None,
            JobShape::Hyperparams { arch, .. } => Some(arch),
        }
    }

    pub fn evaluator_id(&self) -> &str {
        &self.evaluator_id
    }

    pub fn metric_name(&self) -> &str {
        self.backend.metric_name()
    }

    /// Number of times the backend itself was invoked.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn job_for(&self, subject: &ArchitectureDescriptor, seed: u64, iteration: usize) -> EvalJob {
        match &self.shape {
            JobShape::Architecture => EvalJob::for_arch(subject.clone(), seed, iteration),
            JobShape::Hyperparams { arch, space } => EvalJob {
                subject: subject.clone(),
                arch: arch.clone(),
                hyperparams: space.to_json(subject),
                seed,
                iteration,
            },
        }
    }

    /// Scores `subject`, consulting the cache first. A hit returns the
    /// stored record with `cache_hit` set and `iteration` replaced by the
    /// caller's.
    pub fn evaluate(
        &self,
        subject: &ArchitectureDescriptor,
        seed: u64,
        iteration: usize,
    ) -> Result<EvaluationRecord, EvalError> {
        let canonical = subject.canonical();
        let key = CacheKey {
            evaluator_id: self.evaluator_id.clone(),
            canonical: canonical.clone(),
            seed,
        };
        let slot = {
            let mut cache = self.cache.lock().expect("cache poisoned");
            Arc::clone(cache.entry(key).or_default())
        };
        let mut guard = slot.lock().expect("cache slot poisoned");
        if let Some(rec) = guard.as_ref() {
            let mut hit = rec.clone();
            hit.cache_hit = true;
            hit.iteration = iteration;
            return Ok(hit);
        }

        let job = self.job_for(subject, seed, iteration);
        self.backend_calls.fetch_add(1, Ordering::SeqCst);
        let score = self.backend.score(&job)?;
        if !score.value.is_finite() || !(0.0..=1.0).contains(&score.value) {
            return Err(EvalError::InvalidMetric {
                canonical,
                value: score.value,
            });
        }
        let rec = EvaluationRecord {
            canonical,
            metric_name: self.backend.metric_name().to_string(),
            metric_value: score.value,
            aux_metrics: score.aux,
            evaluator_id: self.evaluator_id.clone(),
            seed,
            iteration,
            wall_time_s: score.wall_time_s,
            cache_hit: false,
        };
        if let Some(store) = &self.store {
            let line = serde_json::to_string(&rec).expect("records serialize");
            let mut f = store.lock().expect("cache file poisoned");
            writeln!(f, "{line}").map_err(|e| EvalError::Io(e.to_string()))?;
            f.flush().map_err(|e| EvalError::Io(e.to_string()))?;
        }
        *guard = Some(rec.clone());
        Ok(rec)
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::CountingBackend;
    use super::*;
    use crate::space::lookup_space;

    #[test]
    fn second_call_hits_cache() {
        let backend = Arc::new(CountingBackend::new());
        let ev = Evaluator::new(Arc::clone(&backend));
        let d = lookup_space("autogel").unwrap().first_descriptor();
        let a = ev.evaluate(&d, 0, 0).unwrap();
        let b = ev.evaluate(&d, 0, 1).unwrap();
        assert!(!a.cache_hit);
        assert!(b.cache_hit);
        assert_eq!(b.iteration, 1);
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
        assert_eq!(ev.backend_calls(), 1);
        assert_eq!(a.metric_value, b.metric_value);
    }

    #[test]
    fn different_seeds_call_backend_twice() {
        let backend = Arc::new(CountingBackend::new());
        let ev = Evaluator::new(Arc::clone(&backend));
        let d = lookup_space("autogel").unwrap().first_descriptor();
        ev.evaluate(&d, 0, 0).unwrap();
        ev.evaluate(&d, 1, 0).unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn concurrent_calls_on_one_key_run_backend_once() {
        let backend = Arc::new(CountingBackend {
            calls: AtomicUsize::new(0),
            delay_ms: 20,
        });
        let ev = Evaluator::new(Arc::clone(&backend));
        let d = lookup_space("nbg").unwrap().first_descriptor();
        let records: Vec<EvaluationRecord> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8).map(|_| s.spawn(|| ev.evaluate(&d, 3, 0).unwrap())).collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
        assert_eq!(records.iter().filter(|r| !r.cache_hit).count(), 1);
        for r in &records {
            let mut r = r.clone();
            r.cache_hit = false;
            assert_eq!(r, records.iter().find(|x| !x.cache_hit).unwrap().clone());
        }
    }

    struct BadBackend;

    impl Backend for BadBackend {
        fn id(&self) -> String {
            "bad".into()
        }

        fn score(&self, _: &EvalJob) -> Result<Score, EvalError> {
            Ok(Score::new(1.5))
        }
    }

    #[test]
    fn out_of_range_metric_rejected() {
        let ev = Evaluator::new(BadBackend);
        let d = lookup_space("nbg").unwrap().first_descriptor();
        assert!(matches!(ev.evaluate(&d, 0, 0), Err(EvalError::InvalidMetric { .. })));
    }

    #[test]
    fn cache_file_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let d = lookup_space("nbg").unwrap().first_descriptor();
        {
            let ev = Evaluator::new(CountingBackend::new()).with_cache_file(&path).unwrap();
            ev.evaluate(&d, 0, 0).unwrap();
        }
        let backend = Arc::new(CountingBackend::new());
        let ev = Evaluator::new(Arc::clone(&backend)).with_cache_file(&path).unwrap();
        assert!(ev.evaluate(&d, 0, 4).unwrap().cache_hit);
        assert_eq!(backend.calls.load(Ordering::SeqCst), 0);

        std::fs::write(&path, "{not json\n").unwrap();
        assert!(matches!(
            Evaluator::new(CountingBackend::new()).with_cache_file(&path),
            Err(EvalError::CacheCorrupt(_))
        ));
    }

    #[test]
    fn record_json_field_names() {
        let mut r = EvaluationRecord::new("c", "val_acc", 0.5, "e", 1, 2);
        r.aux_metrics.insert("test_acc".into(), 0.4);
        let v: Value = serde_json::to_value(&r).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for k in [
            "canonical",
            "metric_name",
            "metric_value",
            "aux",
            "evaluator_id",
            "seed",
            "iteration",
            "wall_time_s",
            "cache_hit",
        ] {
            assert!(keys.contains(&k), "{k}");
        }
    }
}
