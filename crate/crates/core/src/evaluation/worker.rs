//! Client side of the `gnas-worker/1` protocol: newline-delimited JSON over
//! a worker process's standard streams.
//!
//! Requests carry a string `id` that the worker echoes; responses may come
//! back in any order, so a reader thread routes each line to the waiting
//! caller by id. At most `max_in_flight` requests are outstanding at once.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Map, Value};

use super::{Backend, EvalError, EvalJob, Score};

pub const PROTOCOL: &str = "gnas-worker/1";

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerOptions {
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl Default for WorkerOptions {
    fn default() -> Self {
        WorkerOptions {
            max_in_flight: 4,
            timeout: Duration::from_secs(600),
        }
    }
}

/// What the worker advertised in its `hello` response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HelloInfo {
    pub protocol: String,
    pub spaces: Vec<String>,
    pub capabilities: Vec<String>,
}

type Pending = Arc<Mutex<HashMap<String, mpsc::Sender<Value>>>>;

struct Permits {
    used: Mutex<usize>,
    freed: Condvar,
    max: usize,
}

impl Permits {
    fn acquire(&self) {
        let mut used = self.used.lock().expect("permits poisoned");
        while *used >= self.max {
            used = self.freed.wait(used).expect("permits poisoned");
        }
        *used += 1;
    }

    fn release(&self) {
        *self.used.lock().expect("permits poisoned") -= 1;
        self.freed.notify_one();
    }
}

pub struct WorkerClient {
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Pending,
    closed: Arc<AtomicBool>,
    next_id: AtomicU64,
    permits: Permits,
    timeout: Duration,
    hello: HelloInfo,
    child: Mutex<Option<Child>>,
    reader: Option<JoinHandle<()>>,
}

impl WorkerClient {
    /// Starts `command` through `sh -c` and performs the handshake.
    pub fn spawn(command: &str, options: WorkerOptions) -> Result<Self, EvalError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| EvalError::WorkerUnavailable(format!("cannot start {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let mut client = Self::connect(stdout, stdin, options)?;
        *client.child.get_mut().expect("child lock poisoned") = Some(child);
        Ok(client)
    }

    /// Speaks the protocol over arbitrary streams and performs the handshake.
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        options: WorkerOptions,
    ) -> Result<Self, EvalError> {
        Self::connect(reader, writer, options)
    }

    fn connect(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        options: WorkerOptions,
    ) -> Result<Self, EvalError> {
        let pending: Pending = Arc::default();
        let closed = Arc::new(AtomicBool::new(false));
        let handle = {
            let pending = Arc::clone(&pending);
            let closed = Arc::clone(&closed);
            std::thread::spawn(move || route_responses(reader, &pending, &closed))
        };
        let mut client = WorkerClient {
            writer: Mutex::new(Box::new(writer)),
            pending,
            closed,
            next_id: AtomicU64::new(0),
            permits: Permits {
                used: Mutex::new(0),
                freed: Condvar::new(),
                max: options.max_in_flight.max(1),
            },
            timeout: options.timeout,
            hello: HelloInfo {
                protocol: String::new(),
                spaces: Vec::new(),
                capabilities: Vec::new(),
            },
            child: Mutex::new(None),
            reader: Some(handle),
        };
        client.hello = client.handshake()?;
        Ok(client)
    }

    fn handshake(&self) -> Result<HelloInfo, EvalError> {
        let resp = self.request("hello", Map::new())?;
        let protocol = resp
            .get("protocol")
            .and_then(Value::as_str)
            .ok_or_else(|| EvalError::ProtocolViolation("hello response lacks `protocol`".into()))?;
        if protocol != PROTOCOL {
            return Err(EvalError::ProtocolViolation(format!(
                "worker speaks {protocol:?}, expected {PROTOCOL:?}"
            )));
        }
        let strings = |key: &str| -> Vec<String> {
            resp.get(key)
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
                .unwrap_or_default()
        };
        Ok(HelloInfo {
            protocol: protocol.to_string(),
            spaces: strings("spaces"),
            capabilities: strings("capabilities"),
        })
    }

    pub fn hello(&self) -> &HelloInfo {
        &self.hello
    }

    /// Sends `{"id", "kind", ...body}` and waits for the matching response.
    /// `status: "error"` responses become [`EvalError::WorkerError`].
    pub fn request(&self, kind: &str, body: Map<String, Value>) -> Result<Value, EvalError> {
        self.permits.acquire();
        let result = self.request_inner(kind, body);
        self.permits.release();
        result
    }

    fn request_inner(&self, kind: &str, mut body: Map<String, Value>) -> Result<Value, EvalError> {
        if self.closed.load(Ordering::SeqCst) {
            return Err(EvalError::WorkerUnavailable("worker closed its output".into()));
        }
        let id = format!("req-{}", self.next_id.fetch_add(1, Ordering::SeqCst));
        body.insert("id".into(), Value::String(id.clone()));
        body.insert("kind".into(), Value::String(kind.to_string()));
        let (tx, rx) = mpsc::channel();
        self.pending.lock().expect("pending poisoned").insert(id.clone(), tx);

        let line = serde_json::to_string(&Value::Object(body)).expect("requests serialize");
        let sent = {
            let mut w = self.writer.lock().expect("writer poisoned");
            writeln!(w, "{line}").and_then(|_| w.flush())
        };
        if let Err(e) = sent {
            self.pending.lock().expect("pending poisoned").remove(&id);
            return Err(EvalError::WorkerUnavailable(format!("cannot write request: {e}")));
        }

        let resp = match rx.recv_timeout(self.timeout) {
            Ok(v) => v,
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().expect("pending poisoned").remove(&id);
                return Err(EvalError::Timeout(self.timeout.as_millis() as u64));
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(EvalError::WorkerUnavailable("worker exited before answering".into()));
            }
        };
        if resp.get("status").and_then(Value::as_str) == Some("error") {
            let message = resp
                .get("message")
                .and_then(Value::as_str)
                .unwrap_or("worker reported an error without a message");
            return Err(EvalError::WorkerError(message.to_string()));
        }
        Ok(resp)
    }

    /// Text embeddings from the worker, one vector per text.
    pub fn embed(&self, texts: &[String], dim: usize) -> Result<Vec<Vec<f64>>, EvalError> {
        let mut body = Map::new();
        body.insert("texts".into(), json!(texts));
        body.insert("dim".into(), json!(dim));
        let resp = self.request("embed", body)?;
        let vectors = resp
            .get("vectors")
            .and_then(Value::as_array)
            .ok_or_else(|| EvalError::ProtocolViolation("embed response lacks `vectors`".into()))?;
        if vectors.len() != texts.len() {
            return Err(EvalError::ProtocolViolation(format!(
                "{} vectors for {} texts",
                vectors.len(),
                texts.len()
            )));
        }
        vectors
            .iter()
            .map(|v| {
                v.as_array()
                    .and_then(|xs| xs.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>())
                    .ok_or_else(|| EvalError::ProtocolViolation("embedding is not a number array".into()))
            })
            .collect()
    }
}

fn route_responses(reader: impl Read, pending: &Pending, closed: &AtomicBool) {
    for line in BufReader::new(reader).lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let Ok(value) = serde_json::from_str::<Value>(&line) else {
            eprintln!("worker: ignoring non-JSON line: {line}");
            continue;
        };
        let id = match value.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(other) => other.to_string(),
            None => {
                eprintln!("worker: ignoring response without id: {line}");
                continue;
            }
        };
        if let Some(tx) = pending.lock().expect("pending poisoned").remove(&id) {
            let _ = tx.send(value);
        }
    }
    closed.store(true, Ordering::SeqCst);
    // Dropping the senders wakes every waiter with a disconnect.
    pending.lock().expect("pending poisoned").clear();
}

impl Drop for WorkerClient {
    fn drop(&mut self) {
        // Closing stdin asks the worker to exit.
        *self.writer.get_mut().expect("writer poisoned") = Box::new(std::io::sink());
        if let Some(mut child) = self.child.get_mut().expect("child poisoned").take() {
            let _ = child.kill();
            let _ = child.wait();
        }
        if let Some(h) = self.reader.take() {
            if self.closed.load(Ordering::SeqCst) {
                let _ = h.join();
            }
        }
    }
}

/// Evaluation through a worker process.
pub struct WorkerBackend {
    client: Arc<WorkerClient>,
    pub dataset: String,
    pub task: String,
    pub epochs: u64,
    pub training_method: String,
    /// Sent when a job carries no hyperparameters of its own.
    pub default_hyperparams: Map<String, Value>,
}

impl WorkerBackend {
    pub fn new(client: Arc<WorkerClient>, dataset: &str, task: &str) -> Self {
        WorkerBackend {
            client,
            dataset: dataset.to_string(),
            task: task.to_string(),
            epochs: 200,
            training_method: "global_batch".into(),
            default_hyperparams: crate::hpo::default_hyperparams_json(),
        }
    }

    pub fn client(&self) -> &WorkerClient {
        &self.client
    }

    /// The `evaluate` request body for `job` (without `id` and `kind`).
    pub fn request_body(&self, job: &EvalJob) -> Map<String, Value> {
        let hyperparams = if job.hyperparams.is_empty() {
            self.default_hyperparams.clone()
        } else {
            job.hyperparams.clone()
        };
        let epochs = hyperparams
            .get("epochs")
            .and_then(Value::as_u64)
            .unwrap_or(self.epochs);
        let mut body = Map::new();
        body.insert("space".into(), json!(job.arch.qualified_id()));
        body.insert("arch".into(), json!(job.arch.canonical()));
        body.insert("hyperparams".into(), Value::Object(hyperparams));
        body.insert("dataset".into(), json!(self.dataset));
        body.insert("task".into(), json!(self.task));
        body.insert("seed".into(), json!(job.seed));
        body.insert("budget".into(), json!({ "epochs": epochs }));
        body.insert("training_method".into(), json!(self.training_method));
        body
    }
}

impl Backend for WorkerBackend {
    fn id(&self) -> String {
        format!("worker:{}:{}", self.dataset, self.task)
    }

    fn score(&self, job: &EvalJob) -> Result<Score, EvalError> {
        let space = job.arch.qualified_id();
        let hello = self.client.hello();
        if !hello.spaces.is_empty() && !hello.spaces.contains(&space) {
            return Err(EvalError::WorkerError(format!("worker does not support space {space}")));
        }
        let resp = self.client.request("evaluate", self.request_body(job))?;
        if resp.get("status").and_then(Value::as_str) != Some("ok") {
            return Err(EvalError::ProtocolViolation("evaluate response lacks status \"ok\"".into()));
        }
        let metrics = resp
            .get("metrics")
            .and_then(Value::as_object)
            .ok_or_else(|| EvalError::ProtocolViolation("evaluate response lacks `metrics`".into()))?;
        let value = metrics
            .get("val_acc")
            .and_then(Value::as_f64)
            .ok_or_else(|| EvalError::ProtocolViolation("response lacks numeric metrics.val_acc".into()))?;
        let aux = metrics
            .iter()
            .filter(|(k, _)| k.as_str() != "val_acc")
            .filter_map(|(k, v)| v.as_f64().map(|x| (k.clone(), x)))
            .collect();
        let wall_time_s = resp.get("wall_time_s").and_then(Value::as_f64).unwrap_or(0.0);
        Ok(Score {
            value,
            aux,
            wall_time_s,
        })
    }
}
