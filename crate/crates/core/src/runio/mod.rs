//! Data ingestion, run configuration, run directories, and the commands
//! behind the CLI.

pub mod app;
pub mod config;
pub mod graph;
pub mod persist;

pub use config::{load_run_config, ConfigError, EvaluatorSpec, Overrides, RunConfig};
pub use graph::{auto_split, bundled_graph, load_graph, load_graph_seeded, GraphDataset, GraphError, Splits};
pub use persist::{check_run_dir, persist_run, read_trace, PersistError, RunSummary, RunWriter};
