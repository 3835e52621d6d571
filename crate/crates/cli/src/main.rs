//! Command-line front end for chunking, training, selection and evaluation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ctxsel::pipeline::{self, ChunkerKind, IngestMode, PipelineConfig, PipelineError, SelectorKind};
use ctxsel::synth::{self, Lexicon, PlantedConfig};

#[derive(Parser)]
#[command(name = "ctxsel", version, about = "Semantic chunking and question-aware context selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split every context of a corpus into chunks.
    Chunk {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "dynamic")]
        chunker: Chunker,
        /// Skip malformed lines instead of aborting.
        #[arg(long)]
        lenient: bool,
    },
    /// Train the chunk classifier on a question-answering corpus.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Loss trace path (default: <out>.loss.csv).
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        lenient: bool,
    },
    /// Select chunks under the token budget and assemble prompts.
    Select {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "classifier")]
        selector: Selector,
        /// Re-chunk documents that were chunked another way.
        #[arg(long, value_enum)]
        chunker: Option<Chunker>,
    },
    /// Gold-chunk recall of a prompts file.
    Eval {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the aligned text table here.
        #[arg(long)]
        text: Option<PathBuf>,
    },
    /// Chunk and score time on generated documents of growing length.
    Latency {
        #[arg(long, value_delimiter = ',', default_value = "8k,16k,32k,64k")]
        sizes: Vec<String>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the rows as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic corpus.
    Generate {
        #[arg(value_enum)]
        kind: Corpus,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        documents: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Chunker {
    Dynamic,
    Fixed,
}

impl From<Chunker> for ChunkerKind {
    fn from(c: Chunker) -> Self {
        match c {
            Chunker::Dynamic => ChunkerKind::Dynamic,
            Chunker::Fixed => ChunkerKind::Fixed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Selector {
    Classifier,
    Cosine,
}

impl From<Selector> for SelectorKind {
    fn from(s: Selector) -> Self {
        match s {
            Selector::Classifier => SelectorKind::Classifier,
            Selector::Cosine => SelectorKind::Cosine,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Corpus {
    /// Multi-topic documents with an answer planted after a topic boundary.
    Planted,
    /// Short question-answering contexts for classifier training.
    Qa,
}

fn mode(lenient: bool) -> IngestMode {
    if lenient { IngestMode::Lenient } else { IngestMode::Strict }
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Chunk { input, out, config, chunker, lenient } => {
            let config = PipelineConfig::load(config.as_deref())?;
            let records = pipeline::cmd_chunk(&input, &out, &config, chunker.into(), mode(lenient))?;
            let chunks: usize = records.iter().map(|r| r.doc.chunks.len()).sum();
            println!("{} documents, {chunks} chunks -> {}", records.len(), out.display());
        }
        Command::Train { input, out, loss_csv, config, lenient } => {
            let config = PipelineConfig::load(config.as_deref())?;
            let report = pipeline::cmd_train(&input, &out, loss_csv.as_deref(), &config, mode(lenient))?;
            let first = report.epoch_losses.first().copied().unwrap_or(f64::NAN);
            let last = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
            println!("{} epochs, loss {first:.4} -> {last:.4}, model -> {}", report.epoch_losses.len(), out.display());
        }
        Command::Select { input, model, out, config, selector, chunker } => {
            let config = PipelineConfig::load(config.as_deref())?;
            let prompts = pipeline::cmd_select(
                &input,
                model.as_deref(),
                &out,
                &config,
                selector.into(),
                chunker.map(Into::into),
            )?;
            let compressed = prompts.iter().filter(|p| !p.dropped.is_empty()).count();
            println!("{} prompts ({compressed} compressed) -> {}", prompts.len(), out.display());
        }
        Command::Eval { input, out, text } => {
            let report = pipeline::cmd_eval(&input, &out, text.as_deref())?;
            print!("{}", report.to_text());
        }
        Command::Latency { sizes, repeats, config, out } => {
            let config = PipelineConfig::load(config.as_deref())?;
            let sizes = sizes.iter().map(|s| pipeline::parse_size(s)).collect::<Result<Vec<_>, _>>()?;
            let rows = pipeline::cmd_latency(&sizes, &config, repeats)?;
            print!("{}", pipeline::latency_table(&rows));
            if let Some(path) = out {
                pipeline::write_json(&path, &rows)?;
            }
        }
        Command::Generate { kind, out, documents, seed } => {
            if documents == 0 {
                return Err(PipelineError::Usage("--documents must be at least 1".into()));
            }
            let lex = Lexicon::standard();
            let docs = match kind {
                Corpus::Planted => {
                    synth::planted_corpus(&lex, &PlantedConfig { documents, seed, ..Default::default() }).documents
                }
                Corpus::Qa => synth::qa_corpus(&lex, documents, (3, 5), &[480], seed),
            };
            pipeline::write_jsonl(&out, &docs)?;
            println!("{} documents -> {}", docs.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
