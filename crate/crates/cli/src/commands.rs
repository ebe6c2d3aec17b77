use std::fs::File;
use std::io::{self, BufRead, BufWriter, IsTerminal, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use docloom_core::eval::{self, EvalError, RougeConfig};
use docloom_core::ingest::{self, ChunkingParams, IngestError};
use docloom_core::pipeline::{self, PipelineConfig, PipelineError};
use docloom_core::{ChatAnswer, ChatSession, VectorStore};
use docloom_service::{AppConfig, AppState};

use crate::{ChatArgs, ChunkArgs, EvalArgs, Failure, IngestArgs, ServeArgs};

const PREVIEW_CHARS: usize = 80;

fn require_file(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} not found: {}", path.display())))
    }
}

fn chunking(args: &ChunkArgs) -> Result<ChunkingParams, Failure> {
    ChunkingParams::new(args.chunk_size, args.overlap).map_err(|e| Failure::Usage(e.to_string()))
}

pub fn ingest(args: IngestArgs) -> Result<(), Failure> {
    require_file(&args.file, "document")?;
    let params = chunking(&args.chunking)?;
    let embedder = args.embed.config(args.dim);
    embedder.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let doc_id = pipeline::doc_id_from_path(&args.file);
    let doc = match pipeline::read_document(&args.file, &doc_id) {
        Err(IngestError::UnsupportedFormat(m)) => return Err(Failure::Usage(format!("unsupported format: {m}"))),
        r => r.with_context(|| format!("reading {}", args.file.display()))?,
    };
    let (chunks, store) = pipeline::index_document(&doc, &params, &embedder)
        .map_err(|e: PipelineError| anyhow::Error::new(e).context(format!("indexing {}", args.file.display())))?;

    let store_path = args.store.unwrap_or_else(|| format!("{doc_id}.dlvs").into());
    store.save(&store_path).with_context(|| format!("writing {}", store_path.display()))?;
    if let Some(path) = &args.chunks {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        ingest::write_chunks_jsonl(&chunks, &mut out).and_then(|_| out.flush()).context("writing chunks")?;
    }
    println!("{} chunks from {} written to {}", chunks.len(), doc.source_name, store_path.display());
    Ok(())
}

fn preview(text: &str) -> String {
    let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut out: String = flat.chars().take(PREVIEW_CHARS).collect();
    if flat.chars().count() > PREVIEW_CHARS {
        out.push('…');
    }
    out
}

fn print_answer(out: &mut impl Write, answer: &ChatAnswer) -> io::Result<()> {
    writeln!(out, "{}", answer.text)?;
    if !answer.sources.is_empty() {
        writeln!(out)?;
    }
    for s in &answer.sources {
        writeln!(out, "{} ({}): {}", s.source_id, s.source_key, preview(&s.excerpt))?;
    }
    writeln!(out)
}

pub fn chat(args: ChatArgs) -> Result<(), Failure> {
    require_file(&args.store, "store")?;
    if args.k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    let store = VectorStore::load(&args.store).with_context(|| format!("loading {}", args.store.display()))?;
    let embedder = args.embed.config(store.dim());
    embedder.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let llm = args.llm.config();
    llm.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let chunk_count = store.len();
    let mut session = ChatSession::new(Arc::new(store), embedder, llm).with_k(args.k);
    let stdin = io::stdin();
    let interactive = stdin.is_terminal();
    let mut out = io::stdout().lock();
    writeln!(out, "docloom chat: {chunk_count} chunks from {}. Type :quit to exit.", args.store.display())
        .context("writing to stdout")?;

    let mut line = String::new();
    loop {
        if interactive {
            write!(out, "> ").and_then(|_| out.flush()).context("writing to stdout")?;
        }
        line.clear();
        if stdin.lock().read_line(&mut line).context("reading stdin")? == 0 {
            break;
        }
        let question = line.trim();
        if question.is_empty() {
            continue;
        }
        if question == ":quit" {
            break;
        }
        match session.ask(question) {
            Ok(answer) => print_answer(&mut out, &answer).context("writing to stdout")?,
            Err(e) => eprintln!("error: {e}"),
        }
        out.flush().context("writing to stdout")?;
    }
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<(), Failure> {
    require_file(&args.dataset, "dataset")?;
    if !(args.beta.is_finite() && args.beta > 0.0) {
        return Err(Failure::Usage(format!("--beta must be a positive finite number, got {}", args.beta)));
    }
    if args.k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    let config = PipelineConfig {
        chunking: chunking(&args.chunking)?,
        embedder: args.embed.config(args.dim),
        llm: args.llm.config(),
        k: args.k,
    };
    config.embedder.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    config.llm.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let records = eval::load_dataset(&args.dataset).map_err(|e: EvalError| anyhow::Error::new(e))?;
    let report =
        eval::evaluate_dataset(&records, &config, &RougeConfig { beta: args.beta }).map_err(anyhow::Error::new)?;
    std::fs::write(&args.out, report.to_json()).with_context(|| format!("writing {}", args.out.display()))?;

    for r in report.records.iter().filter(|r| r.error.is_some()) {
        eprintln!("record {} failed: {}", r.id, r.error.as_deref().unwrap_or_default());
    }
    println!("{}", eval::render_table(&report));
    println!("{}", eval::render_comparison(&report));
    println!("averages (ROUGE-1 / ROUGE-2 / ROUGE-L): {}", eval::format_averages(&report.averages));
    println!("report written to {}", args.out.display());

    if args.strict && report.failed > 0 {
        return Err(Failure::Runtime(anyhow::anyhow!("{} of {} records failed", report.failed, report.records.len())));
    }
    Ok(())
}

#[cfg(unix)]
fn shutdown_signal() -> io::Result<impl std::future::Future<Output = ()>> {
    use tokio::signal::unix::{signal, SignalKind};
    let mut interrupt = signal(SignalKind::interrupt())?;
    let mut terminate = signal(SignalKind::terminate())?;
    Ok(async move {
        tokio::select! {
            _ = interrupt.recv() => {}
            _ = terminate.recv() => {}
        }
    })
}

#[cfg(not(unix))]
fn shutdown_signal() -> io::Result<impl std::future::Future<Output = ()>> {
    Ok(async {
        let _ = tokio::signal::ctrl_c().await;
    })
}

pub fn serve(args: ServeArgs) -> Result<(), Failure> {
    let config = match &args.config {
        Some(path) => AppConfig::load(path),
        None => AppConfig::from_toml_str(""),
    }
    .map_err(|e| Failure::Config(format!("config error: {e}")))?;
    let addr = config.socket_addr().map_err(|e| Failure::Config(e.to_string()))?;

    let _ = tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .try_init();

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().context("starting runtime")?;
    runtime.block_on(async move {
        let store_dir = config.store_dir.clone();
        let state = Arc::new(AppState::open(config).with_context(|| format!("opening {}", store_dir.display()))?);
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        let shutdown = shutdown_signal().context("installing signal handlers")?;
        let bound = listener.local_addr().context("reading bound address")?;
        println!("listening on http://{bound}");
        io::stdout().flush().context("writing to stdout")?;
        docloom_service::serve(listener, state, shutdown).await.context("serving")?;
        eprintln!("shut down");
        Ok::<_, Failure>(())
    })
}
