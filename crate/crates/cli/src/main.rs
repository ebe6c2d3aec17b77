//! `docloom`: ingest documents, chat with them, score answers, serve the API.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use docloom_core::embed::{DEFAULT_DIM, DEFAULT_MODEL_ID};
use docloom_core::eval::DEFAULT_BETA;
use docloom_core::index::DEFAULT_TOP_K;
use docloom_core::{EmbedderConfig, EmbedderKind, LlmConfig, LlmKind};

#[derive(Debug, Parser)]
#[command(name = "docloom", version, about = "Conversational retrieval over your own documents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Chunk, embed and index a .txt or .pdf file into a store file.
    Ingest(IngestArgs),
    /// Ask questions about an indexed document in a line-based REPL.
    Chat(ChatArgs),
    /// Answer every question in a JSONL dataset and report ROUGE scores.
    Eval(EvalArgs),
    /// Run the HTTP service until interrupted.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Document to ingest (.txt or .pdf).
    file: PathBuf,
    /// Output store path [default: <doc-id>.dlvs].
    #[arg(long)]
    store: Option<PathBuf>,
    /// Also write the chunks as JSON lines.
    #[arg(long)]
    chunks: Option<PathBuf>,
    #[command(flatten)]
    chunking: ChunkArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    /// Embedding dimension.
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
}

#[derive(Debug, Args)]
struct ChatArgs {
    /// Store written by `docloom ingest`.
    #[arg(long)]
    store: PathBuf,
    /// Chunks retrieved per question.
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    k: usize,
    #[command(flatten)]
    embed: EmbedArgs,
    #[command(flatten)]
    llm: LlmArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// JSONL file with id, document, question and reference per line.
    #[arg(long)]
    dataset: PathBuf,
    /// Where to write the JSON report.
    #[arg(long, default_value = "eval-report.json")]
    out: PathBuf,
    /// Recall weight of ROUGE-L.
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    /// Exit 1 if any record fails.
    #[arg(long)]
    strict: bool,
    /// Chunks retrieved per question.
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    k: usize,
    #[command(flatten)]
    chunking: ChunkArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    /// Embedding dimension.
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    #[command(flatten)]
    llm: LlmArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ChunkArgs {
    /// Chunk length in characters.
    #[arg(long, default_value_t = 1000)]
    chunk_size: usize,
    /// Characters shared by consecutive chunks.
    #[arg(long, default_value_t = 100)]
    overlap: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EmbedderChoice {
    Hashed,
    Remote,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long, value_enum, default_value_t = EmbedderChoice::Hashed)]
    embedder: EmbedderChoice,
    /// Embeddings endpoint for `--embedder remote`.
    #[arg(long)]
    embed_url: Option<String>,
    #[arg(long, default_value = DEFAULT_MODEL_ID)]
    embed_model: String,
}

impl EmbedArgs {
    fn config(&self, dim: usize) -> EmbedderConfig {
        EmbedderConfig {
            kind: match self.embedder {
                EmbedderChoice::Hashed => EmbedderKind::Hashed,
                EmbedderChoice::Remote => EmbedderKind::Remote,
            },
            dim,
            model_id: self.embed_model.clone(),
            endpoint_url: self.embed_url.clone().unwrap_or_default(),
            api_key: None,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LlmChoice {
    Stub,
    Remote,
}

#[derive(Debug, Args)]
struct LlmArgs {
    #[arg(long, value_enum, default_value_t = LlmChoice::Stub)]
    llm: LlmChoice,
    /// Chat completions endpoint for `--llm remote`.
    #[arg(long)]
    llm_url: Option<String>,
    #[arg(long, default_value = "")]
    llm_model: String,
    /// Sentences the extractive stub returns.
    #[arg(long, default_value_t = docloom_core::chain::DEFAULT_STUB_SENTENCES)]
    stub_sentences: usize,
}

impl LlmArgs {
    fn config(&self) -> LlmConfig {
        LlmConfig {
            kind: match self.llm {
                LlmChoice::Stub => LlmKind::ExtractiveStub,
                LlmChoice::Remote => LlmKind::Remote,
            },
            model_id: self.llm_model.clone(),
            endpoint_url: self.llm_url.clone().unwrap_or_default(),
            stub_sentence_count: self.stub_sentences,
            ..LlmConfig::default()
        }
    }
}

/// Why a command stopped, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Config(String),
    Runtime(anyhow::Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Config(_) => 78,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Chat(a) => commands::chat(a),
        Command::Eval(a) => commands::eval(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) | Failure::Config(m) => eprintln!("docloom: {m}"),
                Failure::Runtime(e) => eprintln!("docloom: {e:#}"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}
