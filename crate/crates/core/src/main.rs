use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use gnas::evaluation::worker::{WorkerClient, WorkerOptions};
use gnas::llm::BackendKind;
use gnas::runio::app::{augment_command, hpo_command, search_command, AugmentCommand, UsageError};
use gnas::runio::{load_run_config, Overrides};
use gnas::space::registered_spaces;

#[derive(Parser)]
#[command(name = "gnas", version, about = "LLM-driven graph neural architecture search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search a space for the best architecture.
    Search(SearchArgs),
    /// Tune training hyperparameters of one architecture.
    Hpo(HpoArgs),
    /// Add LLM explanations and pseudo-labels to node texts.
    Augment(AugmentArgs),
    /// Registered search spaces.
    Spaces {
        #[command(subcommand)]
        command: SpacesCommand,
    },
    /// Talk to a worker process.
    Worker {
        #[command(subcommand)]
        command: WorkerCommand,
    },
}

#[derive(Subcommand)]
enum SpacesCommand {
    /// Print qualified ids, one per line.
    List,
}

#[derive(Subcommand)]
enum WorkerCommand {
    /// Start a worker, print its hello and exit.
    Ping {
        /// Shell command starting the worker.
        #[arg(long)]
        cmd: String,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Graph file (gnas-graph/1); the bundled 10-node graph by default.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_parser = parse_backend)]
    llm: Option<BackendKind>,
    /// surrogate[:file] | oracle:file | worker:cmd
    #[arg(long)]
    evaluator: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long = "per-iter")]
    per_iter: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "parallel-evals")]
    parallel_evals: Option<usize>,
    /// Overwrite an existing run directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long = "search-space")]
    search_space: Option<String>,
    /// Random-search baseline instead of the LLM controller.
    #[arg(long)]
    random: bool,
    /// Tune hyperparameters of every candidate with this many random configs.
    #[arg(long = "hpo-per-candidate")]
    hpo_per_candidate: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct HpoArgs {
    /// Canonical string of the architecture to tune.
    #[arg(long)]
    arch: String,
    /// Hyperparameter space document; the built-in 24-config grid by default.
    #[arg(long = "hp-space")]
    hp_space: Option<PathBuf>,
    #[arg(long)]
    random: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct AugmentArgs {
    /// Comma-separated label names; the graph's label_names by default.
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
    /// Embedding width; 0 skips embeddings.
    #[arg(long = "embed-dim", default_value_t = 0)]
    embed_dim: usize,
    /// hash | worker:cmd
    #[arg(long, default_value = "hash")]
    embedder: String,
    #[arg(long = "char-cap", default_value_t = gnas::augment::DEFAULT_CHAR_CAP)]
    char_cap: usize,
    #[command(flatten)]
    common: Common,
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    s.parse()
}

fn overrides(c: &Common) -> Overrides {
    Overrides {
        input: c.input.clone(),
        task: c.task.clone(),
        output: c.output.clone(),
        llm: c.llm,
        evaluator: c.evaluator.clone(),
        iterations: c.iterations,
        per_iteration: c.per_iter,
        repeats: c.repeats,
        seed: c.seed,
        parallel_evals: c.parallel_evals,
        ..Overrides::default()
    }
}

fn config(c: &Common, extra: impl FnOnce(&mut Overrides)) -> Result<gnas::runio::RunConfig> {
    let mut o = overrides(c);
    extra(&mut o);
    load_run_config(c.config.as_deref(), &o).map_err(|e| UsageError(e.to_string()).into())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Search(a) => {
            let cfg = config(&a.common, |o| {
                o.search_space = a.search_space.clone();
                o.hpo_per_candidate = a.hpo_per_candidate;
            })?;
            let out = search_command(&cfg, a.random, a.common.force)?;
            let best = &out.best().best;
            println!("best {} {}", best.canonical, best.metric_value);
            println!("run directory {}", out.dir.display());
        }
        Command::Hpo(a) => {
            let cfg = config(&a.common, |_| {})?;
            let out = hpo_command(&cfg, &a.arch, a.hp_space.as_deref(), a.random, a.common.force)?;
            let best = &out.best().best;
            println!("best {} {}", best.canonical, best.metric_value);
            println!("run directory {}", out.dir.display());
        }
        Command::Augment(a) => {
            let cfg = config(&a.common, |_| {})?;
            let cmd = AugmentCommand {
                labels: a.labels,
                embed_dim: a.embed_dim,
                embedder: a.embedder,
                char_cap: a.char_cap,
            };
            let calls = augment_command(&cfg, &cmd)?;
            println!("llm calls {calls}");
        }
        Command::Spaces {
            command: SpacesCommand::List,
        } => {
            for (_, s) in registered_spaces() {
                println!("{}", s.qualified_id());
            }
        }
        Command::Worker {
            command: WorkerCommand::Ping { cmd },
        } => {
            let client = WorkerClient::spawn(&cmd, WorkerOptions::default())?;
            let hello = client.hello();
            println!("protocol {}", hello.protocol);
            println!("spaces {}", hello.spaces.join(","));
            println!("capabilities {}", hello.capabilities.join(","));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
