//! Run configuration: built-in defaults, then a TOML file, then CLI flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::ControllerConfig;
use crate::llm::{BackendKind, LlmConfig};
use crate::space::TaskKind;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown field: {0}")]
    UnknownField(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("config file: {0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Where scores come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvaluatorSpec {
    /// Built-in weights for the space, or a weights file.
    Surrogate(Option<PathBuf>),
    Oracle(PathBuf),
    /// Shell command starting a worker.
    Worker(String),
}

impl std::str::FromStr for EvaluatorSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let arg = arg.filter(|a| !a.is_empty());
        match (kind, arg) {
            ("surrogate", a) => Ok(EvaluatorSpec::Surrogate(a.map(PathBuf::from))),
            ("oracle", Some(a)) => Ok(EvaluatorSpec::Oracle(a.into())),
            ("worker", Some(a)) => Ok(EvaluatorSpec::Worker(a.into())),
            _ => Err(ConfigError::InvalidValue(format!(
                "evaluator {s:?}; expected surrogate[:file], oracle:file or worker:cmd"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_name: String,
    pub taskname: String,
    pub in_dim: Option<usize>,
    pub out_dim: Option<usize>,
    /// Graph file; the bundled 10-node graph when absent.
    pub input: Option<PathBuf>,
    pub search_space: String,
    pub evaluator: String,
    pub output: Option<PathBuf>,
    /// Per-candidate HPO budget; 0 tunes nothing during search.
    pub hpo_per_candidate: usize,
    pub llm: LlmConfig,
    pub controller: ControllerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset_name: String::new(),
            taskname: TaskKind::NodeClassification.as_str().into(),
            in_dim: None,
            out_dim: None,
            input: None,
            search_space: "autogel".into(),
            evaluator: "surrogate".into(),
            output: None,
            hpo_per_candidate: 0,
            llm: LlmConfig::default(),
            controller: ControllerConfig::default(),
        }
    }
}

/// Flags that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub search_space: Option<String>,
    pub input: Option<PathBuf>,
    pub task: Option<String>,
    pub output: Option<PathBuf>,
    pub llm: Option<BackendKind>,
    pub evaluator: Option<String>,
    pub iterations: Option<usize>,
    pub per_iteration: Option<usize>,
    pub repeats: Option<usize>,
    pub seed: Option<u64>,
    pub parallel_evals: Option<usize>,
    pub hpo_per_candidate: Option<usize>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            if msg.contains("unknown field") {
                ConfigError::UnknownField(msg)
            } else {
                ConfigError::Parse(e.to_string())
            }
        })
    }

    pub fn task(&self) -> Result<TaskKind, ConfigError> {
        self.taskname.parse().map_err(|_| {
            let supported: Vec<&str> = TaskKind::ALL.iter().map(|t| t.as_str()).collect();
            ConfigError::InvalidValue(format!(
                "taskname {:?}; supported tasks: {}",
                self.taskname,
                supported.join(", ")
            ))
        })
    }

    pub fn evaluator_spec(&self) -> Result<EvaluatorSpec, ConfigError> {
        self.evaluator.parse()
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        set(&mut self.search_space, &o.search_space);
        set(&mut self.taskname, &o.task);
        set(&mut self.evaluator, &o.evaluator);
        set(&mut self.llm.backend, &o.llm);
        set(&mut self.controller.iterations, &o.iterations);
        set(&mut self.controller.per_iteration, &o.per_iteration);
        set(&mut self.controller.repeats, &o.repeats);
        set(&mut self.controller.seed, &o.seed);
        set(&mut self.controller.parallel_evals, &o.parallel_evals);
        set(&mut self.hpo_per_candidate, &o.hpo_per_candidate);
        if o.input.is_some() {
            self.input = o.input.clone();
        }
        if o.output.is_some() {
            self.output = o.output.clone();
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.task()?;
        self.evaluator_spec()?;
        for (name, v) in [("in_dim", self.in_dim), ("out_dim", self.out_dim)] {
            if v == Some(0) {
                return Err(ConfigError::InvalidValue(format!("{name} must be positive")));
            }
        }
        self.llm.validate().map_err(|e| ConfigError::InvalidValue(e.to_string()))?;
        self.controller
            .validate()
            .map_err(|e| ConfigError::InvalidValue(e.to_string()))?;
        Ok(())
    }

    /// The JSON snapshot written into run directories. Any occurrence of
    /// the API key's value is replaced.
    pub fn redacted_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("configs serialize");
        if !self.llm.api_key_env.is_empty() {
            if let Ok(secret) = std::env::var(&self.llm.api_key_env) {
                if !secret.is_empty() {
                    text = text.replace(&secret, "<redacted>");
                }
            }
        }
        text
    }
}

/// Defaults, then `file` if given, then `overrides`; validated.
pub fn load_run_config(file: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut cfg = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            RunConfig::from_toml_str(&text)?
        }
        None => RunConfig::default(),
    };
    cfg.apply(overrides);
    cfg.validate()?;
    Ok(cfg)
}
