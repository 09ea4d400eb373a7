//! Run directories: `config.json`, `trace.jsonl`, `best.json`,
//! `prompts/NNN_{prompt,completion}.txt` and `series.csv`.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::controller::{PromptExchange, SearchObserver, SearchResult};
use crate::evaluation::EvaluationRecord;

pub const TRACE_FILE: &str = "trace.jsonl";
pub const BEST_FILE: &str = "best.json";
pub const CONFIG_FILE: &str = "config.json";
pub const SERIES_FILE: &str = "series.csv";
pub const PROMPTS_DIR: &str = "prompts";

const ARTIFACTS: [&str; 4] = [TRACE_FILE, BEST_FILE, CONFIG_FILE, SERIES_FILE];

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{0} already holds a run; pass --force to overwrite it")]
    RunDirExists(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    BadTrace { path: PathBuf, line: usize, message: String },
    #[error("run check failed: {0}")]
    Check(String),
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Streams one run directory. Trace lines are flushed as they arrive.
pub struct RunWriter {
    dir: PathBuf,
    trace: BufWriter<File>,
    prompt_count: usize,
}

impl RunWriter {
    /// Prepares `dir`. An existing run there is an error unless `force`, in
    /// which case its artifacts (and nothing else) are removed.
    pub fn create(dir: impl AsRef<Path>, config_json: &str, force: bool) -> Result<Self, PersistError> {
        let dir = dir.as_ref().to_path_buf();
        let prompts = dir.join(PROMPTS_DIR);
        let existing = ARTIFACTS.iter().any(|f| dir.join(f).exists()) || prompts.exists();
        if existing {
            if !force {
                return Err(PersistError::RunDirExists(dir));
            }
            for f in ARTIFACTS {
                let p = dir.join(f);
                if p.exists() {
                    fs::remove_file(&p).map_err(io_at(&p))?;
                }
            }
            if prompts.exists() {
                fs::remove_dir_all(&prompts).map_err(io_at(&prompts))?;
            }
        }
        fs::create_dir_all(&prompts).map_err(io_at(&prompts))?;
        let config = dir.join(CONFIG_FILE);
        fs::write(&config, config_json).map_err(io_at(&config))?;
        let trace_path = dir.join(TRACE_FILE);
        let trace = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&trace_path)
            .map_err(io_at(&trace_path))?;
        Ok(RunWriter {
            dir,
            trace: BufWriter::new(trace),
            prompt_count: 0,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_record(&mut self, rec: &EvaluationRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.trace, rec)?;
        self.trace.write_all(b"\n")?;
        self.trace.flush()
    }

    pub fn write_exchange(&mut self, ex: &PromptExchange) -> std::io::Result<()> {
        let prompts = self.dir.join(PROMPTS_DIR);
        let n = self.prompt_count;
        self.prompt_count += 1;
        fs::write(prompts.join(format!("{n:03}_prompt.txt")), &ex.prompt)?;
        fs::write(prompts.join(format!("{n:03}_completion.txt")), &ex.completion)
    }

    /// Writes `best.json` and `series.csv` once all runs are done.
    pub fn finish(&mut self, runs: &[SearchResult], best: &SearchResult) -> Result<(), PersistError> {
        let best_path = self.dir.join(BEST_FILE);
        let text = serde_json::to_string_pretty(&best.best).expect("records serialize");
        fs::write(&best_path, text + "\n").map_err(io_at(&best_path))?;
        let series = self.dir.join(SERIES_FILE);
        let mut csv = String::from("seed,iteration,best_so_far,best_so_far_test\n");
        for r in runs {
            for (i, (v, t)) in r.per_iteration_best.iter().zip(&r.per_iteration_best_test).enumerate() {
                let t = t.map(|t| t.to_string()).unwrap_or_default();
                csv.push_str(&format!("{},{i},{v},{t}\n", r.seed));
            }
        }
        fs::write(&series, csv).map_err(io_at(&series))?;
        Ok(())
    }
}

impl SearchObserver for RunWriter {
    fn on_exchange(&mut self, exchange: &PromptExchange) -> std::io::Result<()> {
        self.write_exchange(exchange)
    }

    fn on_record(&mut self, record: &EvaluationRecord) -> std::io::Result<()> {
        self.write_record(record)
    }
}

/// Writes a finished result in one go.
pub fn persist_run(
    dir: impl AsRef<Path>,
    result: &SearchResult,
    config_json: &str,
    force: bool,
) -> Result<(), PersistError> {
    let dir = dir.as_ref();
    let mut w = RunWriter::create(dir, config_json, force)?;
    for ex in &result.exchanges {
        w.write_exchange(ex).map_err(io_at(&dir.join(PROMPTS_DIR)))?;
    }
    for rec in &result.trace {
        w.write_record(rec).map_err(io_at(&dir.join(TRACE_FILE)))?;
    }
    w.finish(std::slice::from_ref(result), result)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<EvaluationRecord>, PersistError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_at(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_at(path))?;
        let rec = serde_json::from_str(&line).map_err(|e| PersistError::BadTrace {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// What [`check_run_dir`] found.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub records: usize,
    pub best: EvaluationRecord,
    pub prompt_files: usize,
}

/// Round-trip check of a run directory: every trace line parses and
/// re-serializes to the same bytes, and `best.json` holds the highest
/// metric of the trace.
pub fn check_run_dir(dir: impl AsRef<Path>) -> Result<RunSummary, PersistError> {
    let dir = dir.as_ref();
    let trace_path = dir.join(TRACE_FILE);
    let raw = fs::read_to_string(&trace_path).map_err(io_at(&trace_path))?;
    let records = read_trace(&trace_path)?;
    for (i, (line, rec)) in raw.lines().zip(&records).enumerate() {
        let again = serde_json::to_string(rec).expect("records serialize");
        if again != line {
            return Err(PersistError::Check(format!("trace line {} does not round-trip", i + 1)));
        }
    }
    let best_path = dir.join(BEST_FILE);
    let best_text = fs::read_to_string(&best_path).map_err(io_at(&best_path))?;
    let best: EvaluationRecord =
        serde_json::from_str(&best_text).map_err(|e| PersistError::Check(format!("best.json: {e}")))?;
    let max = records
        .iter()
        .map(|r| r.metric_value)
        .fold(f64::NEG_INFINITY, f64::max);
    if records.is_empty() || best.metric_value != max || !records.iter().any(|r| r.canonical == best.canonical && r.metric_value == max) {
        return Err(PersistError::Check("best.json is not the best trace record".into()));
    }
    for f in [CONFIG_FILE, SERIES_FILE] {
        if !dir.join(f).is_file() {
            return Err(PersistError::Check(format!("{f} is missing")));
        }
    }
    let prompt_files = fs::read_dir(dir.join(PROMPTS_DIR))
        .map_err(io_at(&dir.join(PROMPTS_DIR)))?
        .count();
    Ok(RunSummary {
        records: records.len(),
        best,
        prompt_files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{run_search, ControllerConfig};
    use crate::evaluation::surrogate::SurrogateBackend;
    use crate::evaluation::Evaluator;
    use crate::llm::LlmGateway;
    use crate::prompt::TaskMeta;
    use crate::space::lookup_space;

    fn small_run() -> SearchResult {
        let space = lookup_space("autogel").unwrap();
        let ev = Evaluator::new(SurrogateBackend::builtin("autogel").unwrap());
        let cfg = ControllerConfig {
            iterations: 2,
            per_iteration: 3,
            ..ControllerConfig::default()
        };
        run_search(&cfg, &space, &LlmGateway::mock(), &ev, &TaskMeta::default()).unwrap()
    }

    #[test]
    fn writes_and_checks() {
        let dir = tempfile::tempdir().unwrap();
        let run = small_run();
        persist_run(dir.path(), &run, "{}", false).unwrap();
        let s = check_run_dir(dir.path()).unwrap();
        assert_eq!(s.records, 6);
        assert_eq!(s.prompt_files, 4);
        assert_eq!(s.best.canonical, run.best.canonical);
        assert_eq!(read_trace(dir.path().join(TRACE_FILE)).unwrap(), run.trace);
        let series = fs::read_to_string(dir.path().join(SERIES_FILE)).unwrap();
        assert_eq!(series.lines().count(), 3);
        assert!(dir.path().join("prompts/001_completion.txt").is_file());
    }

    #[test]
    fn refuses_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let run = small_run();
        persist_run(dir.path(), &run, "{}", false).unwrap();
        let keep = dir.path().join("notes.txt");
        fs::write(&keep, "mine").unwrap();
        assert!(matches!(
            persist_run(dir.path(), &run, "{}", false),
            Err(PersistError::RunDirExists(_))
        ));
        persist_run(dir.path(), &run, "{}", true).unwrap();
        assert_eq!(check_run_dir(dir.path()).unwrap().records, 6);
        assert!(keep.is_file());
    }

    #[test]
    fn corrupt_trace_detected() {
        let dir = tempfile::tempdir().unwrap();
        persist_run(dir.path(), &small_run(), "{}", false).unwrap();
        let p = dir.path().join(TRACE_FILE);
        let mut t = fs::read_to_string(&p).unwrap();
        t.push_str("{not json\n");
        fs::write(&p, t).unwrap();
        assert!(matches!(check_run_dir(dir.path()), Err(PersistError::BadTrace { line: 7, .. })));
    }
}
