//! Flag and config-file resolution. Flags win over the file, the file wins
//! over built-in defaults, and everything is validated before work starts.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

use forpkg_core::extraction::DEFAULT_TAU;
use forpkg_core::similarity::DEFAULT_LAMBDA;

use crate::CliError;

pub const DEFAULT_PROVIDER: &str = "hash-ngram";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmMode {
    Replay,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierMode {
    Rule,
    Http,
}

/// Everything a config file may set.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub corpus_dir: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
    pub llm_mode: Option<LlmMode>,
    pub classifier_mode: Option<ClassifierMode>,
    pub transcripts: Option<PathBuf>,
    pub embed_cache: Option<PathBuf>,
    pub strict: Option<bool>,
    pub parallelism: Option<usize>,
    pub provider: Option<String>,
    pub ontology: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub policy: Option<String>,
    pub format: Option<String>,
    pub hops: Option<usize>,
    pub max: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("config: cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("config: {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct PipelineFlags {
    /// Directory of policy documents (`<doc_id>.txt` plus optional `<doc_id>.meta.json`)
    #[arg(long = "corpus")]
    pub corpus_dir: Option<PathBuf>,
    /// Graph snapshot to write (jsonl); the run report goes to `<output>.report.json`
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Similarity threshold for `relevant` edges, in (0, 1)
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Abstention threshold on the top classifier score, in [0, 1]
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long = "llm", value_enum)]
    pub llm_mode: Option<LlmMode>,
    #[arg(long = "classifier", value_enum)]
    pub classifier_mode: Option<ClassifierMode>,
    /// Replay transcripts to read (replay) or to record into (http)
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
    #[arg(long)]
    pub embed_cache: Option<PathBuf>,
    /// `hash-ngram`, `hash-ngram:DIM:N` or `http`
    #[arg(long)]
    pub provider: Option<String>,
    /// Schema extension merged into the builtin ontology
    #[arg(long)]
    pub ontology: Option<PathBuf>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Exit 1 when any document failed
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus_dir: PathBuf,
    pub output: PathBuf,
    pub lambda: f64,
    pub tau: f64,
    pub llm_mode: LlmMode,
    pub classifier_mode: ClassifierMode,
    pub transcripts: Option<PathBuf>,
    pub embed_cache: Option<PathBuf>,
    pub provider: String,
    pub ontology: Option<PathBuf>,
    pub strict: bool,
    pub parallelism: usize,
}

fn bad(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {message}"))
}

/// Which parts of the pipeline a subcommand runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Needs {
    pub similarity: bool,
    pub extraction: bool,
}

impl PipelineConfig {
    pub fn resolve(flags: PipelineFlags, file: &FileConfig, needs: Needs) -> Result<Self, CliError> {
        let corpus_dir = flags
            .corpus_dir
            .or_else(|| file.corpus_dir.clone())
            .ok_or_else(|| bad("corpus_dir", "required (--corpus)"))?;
        let output =
            flags.output.or_else(|| file.output.clone()).ok_or_else(|| bad("output", "required (--output)"))?;
        let config = PipelineConfig {
            corpus_dir,
            output,
            lambda: flags.lambda.or(file.lambda).unwrap_or(DEFAULT_LAMBDA),
            tau: flags.tau.or(file.tau).unwrap_or(DEFAULT_TAU),
            llm_mode: flags.llm_mode.or(file.llm_mode).unwrap_or(LlmMode::Replay),
            classifier_mode: flags.classifier_mode.or(file.classifier_mode).unwrap_or(ClassifierMode::Rule),
            transcripts: flags.transcripts.or_else(|| file.transcripts.clone()),
            embed_cache: flags.embed_cache.or_else(|| file.embed_cache.clone()),
            provider: flags.provider.or_else(|| file.provider.clone()).unwrap_or_else(|| DEFAULT_PROVIDER.into()),
            ontology: flags.ontology.or_else(|| file.ontology.clone()),
            strict: flags.strict || file.strict.unwrap_or(false),
            parallelism: flags.parallelism.or(file.parallelism).unwrap_or(1),
        };
        config.validate(needs)?;
        Ok(config)
    }

    fn validate(&self, needs: Needs) -> Result<(), CliError> {
        if !self.corpus_dir.is_dir() {
            return Err(bad("corpus_dir", format!("{} is not a directory", self.corpus_dir.display())));
        }
        if self.output.is_dir() {
            return Err(bad("output", format!("{} is a directory", self.output.display())));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(bad("lambda", format!("must lie in (0, 1), got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(bad("tau", format!("must lie in [0, 1], got {}", self.tau)));
        }
        if self.parallelism == 0 {
            return Err(bad("parallelism", "must be at least 1"));
        }
        if let Some(o) = &self.ontology {
            if !o.is_file() {
                return Err(bad("ontology", format!("{} not found", o.display())));
            }
        }
        if needs.similarity {
            parse_provider(&self.provider)?;
        }
        if needs.extraction && self.llm_mode == LlmMode::Replay {
            match &self.transcripts {
                None => return Err(bad("transcripts", "required with --llm replay")),
                Some(p) if !p.is_file() => {
                    return Err(bad("transcripts", format!("{} not found", p.display())));
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// True when no step can reach the network.
    pub fn offline(&self, needs: Needs) -> bool {
        let provider_local = !needs.similarity || !matches!(parse_provider(&self.provider), Ok(ProviderSpec::Http));
        let extraction_local =
            !needs.extraction || (self.llm_mode == LlmMode::Replay && self.classifier_mode == ClassifierMode::Rule);
        provider_local && extraction_local
    }
}

pub fn report_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".report.json");
    PathBuf::from(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderSpec {
    HashNgram { dim: usize, n: usize },
    Http,
}

pub fn parse_provider(spec: &str) -> Result<ProviderSpec, CliError> {
    let mut parts = spec.split(':');
    match parts.next() {
        Some("hash-ngram") => {
            let rest: Vec<&str> = parts.collect();
            match rest.as_slice() {
                [] => Ok(ProviderSpec::HashNgram { dim: 1024, n: 2 }),
                [dim, n] => {
                    let dim: usize = dim.parse().map_err(|_| bad("provider", format!("bad dimension `{dim}`")))?;
                    let n: usize = n.parse().map_err(|_| bad("provider", format!("bad n-gram size `{n}`")))?;
                    if dim < forpkg_core::similarity::MIN_NGRAM_DIM || n == 0 {
                        return Err(bad("provider", format!("hash-ngram needs dim >= 16 and n >= 1, got {dim}:{n}")));
                    }
                    Ok(ProviderSpec::HashNgram { dim, n })
                }
                _ => Err(bad("provider", format!("expected hash-ngram or hash-ngram:DIM:N, got `{spec}`"))),
            }
        }
        Some("http") if parts.next().is_none() => Ok(ProviderSpec::Http),
        _ => Err(bad("provider", format!("unknown provider `{spec}`"))),
    }
}
