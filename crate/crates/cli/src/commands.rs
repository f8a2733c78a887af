//! Subcommand implementations.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;

use forpkg_core::corpus::{load_corpus, Corpus};
use forpkg_core::eval::{load_gold, render_report, score, triples_from_store, MatchPolicy, ReportFormat};
use forpkg_core::extraction::{
    extract_corpus, ingest_corpus, ClassifierClient, ExtractionConfig, HttpClassifierClient, HttpLlmClient, LlmClient,
    PipelineReport, RecordingClient, ReplayClient, RuleClassifier,
};
use forpkg_core::net;
use forpkg_core::ontology::{builtin_schema, OntologySchema};
use forpkg_core::rag::{link_query, retrieve_subgraph, serialize_context, RetrievalConfig, DEFAULT_CONTEXT_CHARS};
use forpkg_core::remote::RetryPolicy;
use forpkg_core::similarity::{
    build_relevance_edges, EmbeddingCache, EmbeddingProvider, HashNgramProvider, HttpEmbeddingProvider,
    SimilarityConfig,
};
use forpkg_core::store::{export_graph, import_graph, ExportFormat, GraphStore};

use crate::config::{
    parse_provider, report_path, ClassifierMode, FileConfig, LlmMode, Needs, PipelineConfig, PipelineFlags,
    ProviderSpec,
};
use crate::CliError;

pub const EMBEDDING_ENDPOINT_ENV: &str = "FORPKG_EMBEDDING_ENDPOINT";
pub const EMBEDDING_DIM_ENV: &str = "FORPKG_EMBEDDING_DIM";

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

fn load_schema(extension: Option<&Path>) -> Result<Arc<OntologySchema>, CliError> {
    let builtin = builtin_schema();
    let Some(path) = extension else {
        return Ok(Arc::new(builtin));
    };
    let ext = OntologySchema::load(path).map_err(|e| CliError::Config(format!("ontology: {e}")))?;
    builtin.extend(&ext).map(Arc::new).map_err(|e| CliError::Config(format!("ontology: {e}")))
}

fn read_graph(path: &Path, schema: &Arc<OntologySchema>) -> Result<GraphStore, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Config(format!("graph: cannot read {}: {e}", path.display())))?;
    import_graph(&bytes, schema.clone()).map_err(|e| failed(format!("{}: {e}", path.display())))
}

/// The snapshot at `path` if it exists, otherwise an empty store.
fn open_snapshot(path: &Path, schema: &Arc<OntologySchema>) -> Result<GraphStore, CliError> {
    if path.exists() {
        read_graph(path, schema)
    } else {
        Ok(GraphStore::new(schema.clone()))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| failed(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| failed(format!("{}: {e}", path.display())))
}

fn write_snapshot(store: &GraphStore, path: &Path) -> Result<(), CliError> {
    write_file(path, &export_graph(store, ExportFormat::Jsonl))
}

fn write_report(report: &PipelineReport, output: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report).map_err(failed)?;
    text.push('\n');
    write_file(&report_path(output), text.as_bytes())
}

fn load(cfg: &PipelineConfig) -> Result<Corpus, CliError> {
    let corpus = load_corpus(&cfg.corpus_dir).map_err(failed)?;
    for w in &corpus.warnings {
        log::warn!("{w}");
    }
    Ok(corpus)
}

/// Writes snapshot and report, then applies `--strict`.
fn finish(store: &GraphStore, report: &PipelineReport, cfg: &PipelineConfig) -> Result<(), CliError> {
    write_snapshot(store, &cfg.output)?;
    write_report(report, &cfg.output)?;
    for (doc, err) in &report.failed_documents {
        log::warn!("{doc}: {err}");
    }
    if cfg.strict && report.has_failures() {
        return Err(failed(format!("{} document(s) failed", report.failed_documents.len())));
    }
    Ok(())
}

fn prepare(
    flags: PipelineFlags,
    file: &FileConfig,
    needs: Needs,
) -> Result<(PipelineConfig, Arc<OntologySchema>), CliError> {
    let cfg = PipelineConfig::resolve(flags, file, needs)?;
    let schema = load_schema(cfg.ontology.as_deref())?;
    if cfg.offline(needs) {
        net::forbid_network();
    }
    Ok((cfg, schema))
}

pub fn ingest(flags: PipelineFlags, file: &FileConfig) -> Result<(), CliError> {
    let (cfg, schema) = prepare(flags, file, Needs { similarity: false, extraction: false })?;
    let corpus = load(&cfg)?;
    let mut store = open_snapshot(&cfg.output, &schema)?;
    let report = ingest_corpus(&corpus, &mut store).map_err(failed)?;
    finish(&store, &report, &cfg)
}

fn provider(cfg: &PipelineConfig) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    match parse_provider(&cfg.provider)? {
        ProviderSpec::HashNgram { dim, n } => Ok(Box::new(HashNgramProvider::new(dim, n))),
        ProviderSpec::Http => {
            let url = std::env::var(EMBEDDING_ENDPOINT_ENV)
                .map_err(|_| CliError::Config(format!("provider: {EMBEDDING_ENDPOINT_ENV} is not set")))?;
            let dim: usize = std::env::var(EMBEDDING_DIM_ENV).ok().and_then(|d| d.parse().ok()).ok_or_else(|| {
                CliError::Config(format!("provider: {EMBEDDING_DIM_ENV} must be set to the vector size"))
            })?;
            Ok(Box::new(HttpEmbeddingProvider::new(&url, dim, format!("http:{url}"))))
        }
    }
}

fn link(
    corpus: &Corpus,
    cfg: &PipelineConfig,
    store: &mut GraphStore,
    report: &mut PipelineReport,
) -> Result<(), CliError> {
    if corpus.documents.is_empty() {
        return Ok(());
    }
    let provider = provider(cfg)?;
    let mut sim = SimilarityConfig::new(cfg.lambda, provider.provider_id());
    sim.parallelism = cfg.parallelism;
    let mut cache = match &cfg.embed_cache {
        Some(path) => Some(EmbeddingCache::load(path, provider.provider_id(), provider.dim()).map_err(failed)?),
        None => None,
    };
    let outcome =
        build_relevance_edges(&corpus.documents, provider.as_ref(), &sim, store, cache.as_mut()).map_err(failed)?;
    report.similarity_evaluations += outcome.evaluations;
    report.relevance_edges += outcome.triple_ids.len();
    if let (Some(cache), Some(path)) = (cache, &cfg.embed_cache) {
        cache.save(path).map_err(failed)?;
    }
    Ok(())
}

pub fn link_similar(flags: PipelineFlags, file: &FileConfig) -> Result<(), CliError> {
    let (cfg, schema) = prepare(flags, file, Needs { similarity: true, extraction: false })?;
    let corpus = load(&cfg)?;
    let mut store = open_snapshot(&cfg.output, &schema)?;
    let mut report = PipelineReport::default();
    link(&corpus, &cfg, &mut store, &mut report)?;
    finish(&store, &report, &cfg)
}

enum Llm {
    Replay(ReplayClient),
    Http(HttpLlmClient),
    Record(RecordingClient<HttpLlmClient>, PathBuf),
}

impl Llm {
    fn open(cfg: &PipelineConfig) -> Result<Self, CliError> {
        match cfg.llm_mode {
            LlmMode::Replay => {
                let path = cfg.transcripts.as_deref().expect("validated");
                ReplayClient::load(path).map(Llm::Replay).map_err(|e| CliError::Config(format!("transcripts: {e}")))
            }
            LlmMode::Http => {
                let client = HttpLlmClient::from_env(RetryPolicy::default())
                    .map_err(|e| CliError::Config(format!("llm: {e}")))?;
                Ok(match &cfg.transcripts {
                    Some(path) => Llm::Record(RecordingClient::new(client), path.clone()),
                    None => Llm::Http(client),
                })
            }
        }
    }

    fn client(&self) -> &dyn LlmClient {
        match self {
            Llm::Replay(c) => c,
            Llm::Http(c) => c,
            Llm::Record(c, _) => c,
        }
    }

    /// Persists recorded transcripts, if recording.
    fn close(self) -> Result<(), CliError> {
        if let Llm::Record(rec, path) = self {
            let mut buf = Vec::new();
            rec.write_jsonl(&mut buf).map_err(failed)?;
            write_file(&path, &buf)?;
        }
        Ok(())
    }
}

fn classifier(cfg: &PipelineConfig, schema: &OntologySchema) -> Result<Box<dyn ClassifierClient>, CliError> {
    match cfg.classifier_mode {
        ClassifierMode::Rule => Ok(Box::new(RuleClassifier::new(schema))),
        ClassifierMode::Http => HttpClassifierClient::from_env(schema)
            .map(|c| Box::new(c) as Box<dyn ClassifierClient>)
            .map_err(|e| CliError::Config(format!("classifier: {e}"))),
    }
}

fn run_extraction(corpus: &Corpus, cfg: &PipelineConfig, store: &mut GraphStore) -> Result<PipelineReport, CliError> {
    let llm = Llm::open(cfg)?;
    let classifier = classifier(cfg, store.schema())?;
    let config = ExtractionConfig { tau: cfg.tau, parallelism: cfg.parallelism };
    let report = extract_corpus(corpus, llm.client(), classifier.as_ref(), &config, store);
    llm.close()?;
    Ok(report)
}

pub fn extract(flags: PipelineFlags, file: &FileConfig) -> Result<(), CliError> {
    let (cfg, schema) = prepare(flags, file, Needs { similarity: false, extraction: true })?;
    let corpus = load(&cfg)?;
    let mut store = open_snapshot(&cfg.output, &schema)?;
    let report = run_extraction(&corpus, &cfg, &mut store)?;
    finish(&store, &report, &cfg)
}

pub fn run_all(flags: PipelineFlags, file: &FileConfig) -> Result<(), CliError> {
    let (cfg, schema) = prepare(flags, file, Needs { similarity: true, extraction: true })?;
    let corpus = load(&cfg)?;
    let mut store = GraphStore::new(schema);
    let mut report = PipelineReport::default();
    if !corpus.documents.is_empty() {
        report = ingest_corpus(&corpus, &mut store).map_err(failed)?;
        link(&corpus, &cfg, &mut store, &mut report)?;
        report.merge(run_extraction(&corpus, &cfg, &mut store)?);
    }
    finish(&store, &report, &cfg)
}

fn pick<T: Clone>(flag: Option<T>, file: &Option<T>, field: &str) -> Result<T, CliError> {
    flag.or_else(|| file.clone()).ok_or_else(|| CliError::Config(format!("{field}: required (--{field})")))
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match output {
        Some(path) => write_file(path, bytes),
        None => std::io::stdout().lock().write_all(bytes).map_err(failed),
    }
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Graph snapshot (jsonl)
    #[arg(long)]
    graph: Option<PathBuf>,
    /// `jsonl` or `graphdb_script`
    #[arg(long)]
    format: Option<String>,
    /// Destination; standard output when omitted
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    ontology: Option<PathBuf>,
}

pub fn export(args: ExportArgs, file: &FileConfig) -> Result<(), CliError> {
    net::forbid_network();
    let graph = pick(args.graph, &file.graph, "graph")?;
    let format: ExportFormat = args
        .format
        .or_else(|| file.format.clone())
        .unwrap_or_else(|| "jsonl".into())
        .parse()
        .map_err(|e| CliError::Config(format!("format: {e}")))?;
    let schema = load_schema(args.ontology.or_else(|| file.ontology.clone()).as_deref())?;
    let store = read_graph(&graph, &schema)?;
    emit(args.output.as_deref(), &export_graph(&store, format))
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// jsonl snapshot to validate
    #[arg(long)]
    input: PathBuf,
    /// Canonical re-export; standard output when omitted
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    ontology: Option<PathBuf>,
}

pub fn import(args: ImportArgs, file: &FileConfig) -> Result<(), CliError> {
    net::forbid_network();
    let schema = load_schema(args.ontology.or_else(|| file.ontology.clone()).as_deref())?;
    let store = read_graph(&args.input, &schema)?;
    log::info!("{}: {} entities, {} triples", args.input.display(), store.entity_count(), store.triple_count());
    emit(args.output.as_deref(), &export_graph(&store, ExportFormat::Jsonl))
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Gold annotations, one JSON record per line
    #[arg(long)]
    gold: Option<PathBuf>,
    /// `exact`, `normalized`, `overlap` or `overlap:JACCARD`
    #[arg(long)]
    policy: Option<String>,
    /// `text`, `csv` or `radar_data`
    #[arg(long)]
    format: Option<String>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    ontology: Option<PathBuf>,
}

pub fn eval(args: EvalArgs, file: &FileConfig) -> Result<(), CliError> {
    net::forbid_network();
    let graph = pick(args.graph, &file.graph, "graph")?;
    let gold_path = pick(args.gold, &file.gold, "gold")?;
    if !gold_path.is_file() {
        return Err(CliError::Config(format!("gold: {} not found", gold_path.display())));
    }
    let policy: MatchPolicy = args
        .policy
        .or_else(|| file.policy.clone())
        .unwrap_or_else(|| "normalized".into())
        .parse()
        .map_err(|e| CliError::Config(format!("policy: {e}")))?;
    let format: ReportFormat = args
        .format
        .or_else(|| file.format.clone())
        .unwrap_or_else(|| "text".into())
        .parse()
        .map_err(|e| CliError::Config(format!("format: {e}")))?;
    let schema = load_schema(args.ontology.or_else(|| file.ontology.clone()).as_deref())?;
    let store = read_graph(&graph, &schema)?;
    let gold = load_gold(&gold_path, &schema).map_err(|e| failed(format!("{}: {e}", gold_path.display())))?;
    let report = score(&triples_from_store(&store), &gold, &policy);
    emit(args.output.as_deref(), &render_report(&report, format))
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Question text to link against entity mentions
    #[arg(long)]
    text: String,
    #[arg(long)]
    hops: Option<usize>,
    /// Maximum number of triples
    #[arg(long)]
    max: Option<usize>,
    /// Character budget for the context block
    #[arg(long, default_value_t = DEFAULT_CONTEXT_CHARS)]
    max_chars: usize,
    /// Only follow these relations (comma separated)
    #[arg(long, value_delimiter = ',')]
    relations: Vec<String>,
    #[arg(long)]
    ontology: Option<PathBuf>,
}

pub fn query(args: QueryArgs, file: &FileConfig) -> Result<(), CliError> {
    net::forbid_network();
    let graph = pick(args.graph, &file.graph, "graph")?;
    let schema = load_schema(args.ontology.or_else(|| file.ontology.clone()).as_deref())?;
    for r in &args.relations {
        if schema.relation(r).is_none() {
            return Err(CliError::Config(format!("relations: unknown relation `{r}`")));
        }
    }
    let config = RetrievalConfig {
        max_hops: args.hops.or(file.hops).unwrap_or(forpkg_core::rag::DEFAULT_MAX_HOPS),
        max_triples: args.max.or(file.max).unwrap_or(forpkg_core::rag::DEFAULT_MAX_TRIPLES),
        relation_filter: (!args.relations.is_empty()).then(|| args.relations.iter().cloned().collect()),
    };
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let store = read_graph(&graph, &schema)?;
    let seeds = link_query(&args.text, &store);
    let triples = retrieve_subgraph(&seeds, &store, &config).map_err(failed)?;
    emit(None, serialize_context(&triples, &store, args.max_chars).as_bytes())
}
