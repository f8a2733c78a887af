//! `forpkg`: build, inspect and query a forestry policy knowledge graph.
//!
//! Exit status is 0 on success, 1 on runtime failures (including partial
//! per-document failures under `--strict`) and 2 on configuration errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::PipelineFlags;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config values or missing input files.
    Config(String),
    /// The command ran but did not complete cleanly.
    Failed(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Failed(m) => write!(f, "error: {m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "forpkg", version, about = "Forestry policy knowledge graph toolkit")]
struct Cli {
    /// TOML file supplying defaults for any flag
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load the corpus and add publish, classifyTo and cite triples
    Ingest(PipelineFlags),
    /// Add `relevant` edges between similar documents
    LinkSimilar(PipelineFlags),
    /// Run the three-stage content extraction
    Extract(PipelineFlags),
    /// ingest, link-similar and extract into a fresh graph
    RunAll(PipelineFlags),
    /// Write a graph snapshot as jsonl or a property-graph import script
    Export(commands::ExportArgs),
    /// Validate a jsonl snapshot and write it back in canonical form
    Import(commands::ImportArgs),
    /// Score a graph against gold annotations
    Eval(commands::EvalArgs),
    /// Print the retrieval context for a question
    Query(commands::QueryArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => config::FileConfig::load(path)?,
        None => config::FileConfig::default(),
    };
    match cli.command {
        Command::Ingest(flags) => commands::ingest(flags, &file),
        Command::LinkSimilar(flags) => commands::link_similar(flags, &file),
        Command::Extract(flags) => commands::extract(flags, &file),
        Command::RunAll(flags) => commands::run_all(flags, &file),
        Command::Export(args) => commands::export(args, &file),
        Command::Import(args) => commands::import(args, &file),
        Command::Eval(args) => commands::eval(args, &file),
        Command::Query(args) => commands::query(args, &file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("forpkg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
