//! Command-line driver. Exit codes: 0 success, 1 usage or configuration
//! error, 2 runtime failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctxmap_core::document::{Corpus, QaItem};
use ctxmap_core::ranking::{build_dense_index, HashingEmbedder};
use tracing::{info, warn};

use crate::backend::{Backend, ScriptedBackend, WireBackend};
use crate::config::{self, BackendSpec, ConfigError, RunConfig, ScriptedSpec};
use crate::eval::{
    fold_report, read_run, run_experiment, write_outputs, ExperimentContext, ReportMetadata, PREFLIGHT_JSONL, TRACES_JSONL,
};
use crate::io::{corpus_fingerprint, ingest_corpus, ingest_qa, read_dense_index, write_dense_index, CorpusFormat};
use crate::pipeline::{answer, Indices, Mode, Retriever};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ctxmap", version, about = "Map-reduce retrieval-augmented question answering and its evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Wire,
    Scripted,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Base JSON configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Chat-completions base URL (wire backend).
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Model name (wire backend).
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a corpus, build the indices and persist the dense index cache.
    Ingest {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "jsonl")]
        format: CorpusFormat,
        /// Rebuild even if a cache exists.
        #[arg(long)]
        force: bool,
    },
    /// Answer one question.
    Answer {
        /// Free-text question.
        #[arg(long, conflicts_with = "item", required_unless_present = "item")]
        question: Option<String>,
        /// Id of a question in the QA dataset.
        #[arg(long)]
        item: Option<String>,
        #[arg(long, default_value = "briefcontext")]
        mode: Mode,
        /// Print the full answer trace as JSON.
        #[arg(long)]
        trace: bool,
    },
    /// Run an experiment described by a config file layered over --config.
    Experiment { path: PathBuf },
    /// Re-fold the traces of a finished run into a report.
    Report {
        /// Run directory to read; defaults to the output directory.
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `args` (program name first) and runs the command, writing
/// results to `out` and diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { corpus, format, force } => {
            let mut cfg = resolve(&cli.global, None)?;
            if corpus.is_some() {
                cfg.corpus = corpus;
            }
            cmd_ingest(&cfg, format, force, out)
        }
        Command::Answer { question, item, mode, trace } => {
            let cfg = resolve(&cli.global, None)?;
            cmd_answer(&cfg, question, item, mode, trace, out)
        }
        Command::Experiment { path } => {
            let cfg = resolve(&cli.global, Some(&path))?;
            cmd_experiment(&cfg, out)
        }
        Command::Report { from } => {
            let cfg = resolve(&cli.global, None)?;
            cmd_report(&cfg, from.as_deref(), out)
        }
    }
}

/// Config files in order, then flag overrides.
fn resolve(g: &GlobalArgs, extra: Option<&Path>) -> Result<RunConfig, CliError> {
    let layers: Vec<&Path> = g.config.as_deref().into_iter().chain(extra).collect();
    let mut cfg = config::load(&layers)?;
    if let Some(seed) = g.seed {
        cfg.seed = Some(seed);
    }
    if let Some(dir) = &g.output_dir {
        cfg.output_dir = dir.clone();
    }
    match (g.backend, &cfg.backend) {
        (Some(BackendKind::Wire), BackendSpec::Scripted(_)) => cfg.backend = BackendSpec::Wire(Default::default()),
        (Some(BackendKind::Scripted), BackendSpec::Wire(_)) => {
            cfg.backend = BackendSpec::Scripted(ScriptedSpec::default())
        }
        _ => {}
    }
    match &mut cfg.backend {
        BackendSpec::Wire(w) => {
            if let Some(e) = &g.endpoint {
                w.endpoint = e.clone();
            }
            if let Some(m) = &g.model {
                w.model = m.clone();
            }
        }
        BackendSpec::Scripted(_) => {
            if g.endpoint.is_some() || g.model.is_some() {
                return Err(CliError::Usage("--endpoint and --model apply to the wire backend only".into()));
            }
        }
    }
    if let Some(p) = g.parallelism {
        cfg.pipeline.parallelism = p;
    }
    cfg.pipeline.templates = cfg.templates()?;
    cfg.validate()?;
    Ok(cfg)
}

fn make_backend(cfg: &RunConfig, items: &[QaItem]) -> Result<Box<dyn Backend>, CliError> {
    match &cfg.backend {
        BackendSpec::Scripted(spec) => {
            let mut model = spec.model.clone();
            model.seed = cfg.effective_seed();
            let b = ScriptedBackend::for_items(model, items).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(Box::new(b.with_pricing(spec.pricing)))
        }
        BackendSpec::Wire(w) => {
            if std::env::var_os(&w.api_key_env).is_none() {
                warn!(var = %w.api_key_env, "API key variable not set; sending requests without authorization");
            }
            Ok(Box::new(WireBackend::from_env(w.clone())))
        }
    }
}

fn embedder(cfg: &RunConfig) -> HashingEmbedder {
    HashingEmbedder::new(cfg.embedding_dimension)
}

fn provider_name(cfg: &RunConfig) -> String {
    format!("hashing-{}", cfg.embedding_dimension)
}

fn create_output_dir(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| runtime(format!("cannot create {}: {e}", cfg.output_dir.display())))
}

/// Loads the corpus and its indices, reusing the dense cache when it
/// matches the corpus and embedder; otherwise builds and writes it.
fn load_indices(cfg: &RunConfig, corpus: &Corpus, force: bool) -> Result<(Indices, bool), CliError> {
    let path = cfg.index_cache_path();
    let fingerprint = corpus_fingerprint(corpus);
    let provider = embedder(cfg);
    if path.exists() && !force {
        match read_dense_index(&path) {
            Ok((h, dense)) if h.corpus_fingerprint == fingerprint && h.provider == provider_name(cfg) => {
                info!(path = %path.display(), "reusing dense index cache");
                let bm25 = ctxmap_core::ranking::Bm25Index::build(corpus);
                return Ok((Indices { dense, bm25 }, false));
            }
            Ok(_) => warn!(path = %path.display(), "dense index cache is stale; rebuilding"),
            Err(e) => warn!(error = %e, "unreadable dense index cache; rebuilding"),
        }
    }
    let dense = build_dense_index(corpus, &provider).map_err(runtime)?;
    create_output_dir(cfg)?;
    write_dense_index(&path, &dense, &provider_name(cfg), &fingerprint).map_err(runtime)?;
    let bm25 = ctxmap_core::ranking::Bm25Index::build(corpus);
    Ok((Indices { dense, bm25 }, true))
}

fn cmd_ingest(cfg: &RunConfig, format: CorpusFormat, force: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let corpus = ingest_corpus(cfg.corpus_path()?, format).map_err(runtime)?;
    let (_, built) = load_indices(cfg, &corpus, force)?;
    let verb = if built { "built" } else { "reused" };
    writeln!(out, "ingested {} documents; {verb} index cache {}", corpus.len(), cfg.index_cache_path().display())
        .map_err(runtime)?;
    Ok(())
}

fn load_items(cfg: &RunConfig) -> Result<Vec<QaItem>, CliError> {
    ingest_qa(cfg.qa_path()?).map_err(runtime)
}

fn cmd_answer(
    cfg: &RunConfig,
    question: Option<String>,
    item_id: Option<String>,
    mode: Mode,
    trace: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let corpus = ingest_corpus(cfg.corpus_path()?, CorpusFormat::Jsonl).map_err(runtime)?;
    let items = match (&item_id, &cfg.qa) {
        (Some(_), _) | (None, Some(_)) => load_items(cfg)?,
        (None, None) => Vec::new(),
    };
    let item = match (question, item_id) {
        (_, Some(id)) => items
            .iter()
            .find(|i| i.id == id)
            .cloned()
            .ok_or_else(|| CliError::Usage(format!("no question with id {id:?} in the QA dataset")))?,
        (Some(q), None) => QaItem {
            id: "adhoc".into(),
            question: q,
            options: Default::default(),
            gold_answer: String::new(),
            key_doc_ids: Vec::new(),
        },
        (None, None) => return Err(CliError::Usage("pass --question or --item".into())),
    };
    let (indices, _) = load_indices(cfg, &corpus, false)?;
    let provider = embedder(cfg);
    let retriever = Retriever::new(&corpus, &indices, &provider);
    let backend = make_backend(cfg, &items)?;
    let result = answer(mode, &item, &retriever, backend.as_ref(), &cfg.pipeline);
    match result {
        Ok(t) => {
            writeln!(out, "{}", t.final_answer).map_err(runtime)?;
            if trace {
                writeln!(out, "{}", serde_json::to_string_pretty(&t).map_err(runtime)?).map_err(runtime)?;
            }
            Ok(())
        }
        Err(e) => {
            if let (true, Some(t)) = (trace, e.trace()) {
                let _ = writeln!(out, "{}", serde_json::to_string_pretty(t).unwrap_or_default());
            }
            Err(runtime(e))
        }
    }
}

fn cmd_experiment(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let corpus = ingest_corpus(cfg.corpus_path()?, CorpusFormat::Jsonl).map_err(runtime)?;
    let items = load_items(cfg)?;
    let (indices, _) = load_indices(cfg, &corpus, false)?;
    let provider = embedder(cfg);
    let backend = make_backend(cfg, &items)?;
    let ctx = ExperimentContext {
        items: &items,
        retriever: Retriever::new(&corpus, &indices, &provider),
        backend: backend.as_ref(),
        pipeline: &cfg.pipeline,
        seed: cfg.effective_seed(),
    };
    let run = run_experiment(&cfg.experiment, &ctx).map_err(runtime)?;
    let metadata = ReportMetadata {
        experiment: cfg.experiment.kind.to_string(),
        seed: cfg.effective_seed(),
        backend: backend.name(),
        items: items.len(),
        traces_file: TRACES_JSONL.into(),
        preflight_file: PREFLIGHT_JSONL.into(),
        config: recorded_config(cfg)?,
    };
    let report = fold_report(metadata, &run);
    let paths = write_outputs(&cfg.output_dir, &report, &run).map_err(runtime)?;
    write!(out, "{}", report.headline()).map_err(runtime)?;
    writeln!(out, "report written to {}", paths.report_json.display()).map_err(runtime)?;
    Ok(())
}

/// The effective configuration minus the output location, so that reruns
/// into different directories produce identical reports.
fn recorded_config(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let mut v = serde_json::to_value(cfg).map_err(runtime)?;
    if let Some(map) = v.as_object_mut() {
        map.remove("output_dir");
    }
    Ok(v)
}

fn cmd_report(cfg: &RunConfig, from: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let source = from.unwrap_or(&cfg.output_dir);
    let (record, run) = read_run(source).map_err(runtime)?;
    let report = fold_report(record.metadata, &run);
    let paths = write_outputs(&cfg.output_dir, &report, &run).map_err(runtime)?;
    write!(out, "{}", report.headline()).map_err(runtime)?;
    writeln!(out, "report written to {}", paths.report_json.display()).map_err(runtime)?;
    Ok(())
}
