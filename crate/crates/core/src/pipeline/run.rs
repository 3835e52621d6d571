use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_jsonl, write_jsonl, ingest, IngestMode, PipelineConfig, PipelineError, StageTimings};
use crate::classifier::{load_model, MlpModel, ModelError};
use crate::document::{ChunkedDocument, Document};
use crate::embed::Embedder;
use crate::encoder::Encoder;
use crate::segment::{fixed_chunks, Chunk, Segmenter};
use crate::select::{
    assemble, compression_ratio, score_chunks, score_chunks_cosine, select, ScoredChunk, SelectError,
    SelectionResult,
};
use crate::tokenize::{count_tokens, WordPunct};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChunkerKind {
    /// Semantic boundaries from embedding distances.
    #[default]
    Dynamic,
    /// Back-to-back windows of `chunk_len` tokens.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    /// The trained chunk classifier.
    #[default]
    Classifier,
    /// Embedding cosine similarity between chunk and question.
    Cosine,
}

/// One line of a chunk file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub chunker: ChunkerKind,
    #[serde(flatten)]
    pub doc: ChunkedDocument,
}

/// One line of a prompts file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub chunker: ChunkerKind,
    pub selector: SelectorKind,
    pub alpha_c: f64,
    pub context_tokens: usize,
    pub selected_tokens: usize,
    pub prompt_tokens: usize,
    /// Indices of the kept chunks, ascending.
    pub selected: Vec<usize>,
    pub dropped: Vec<usize>,
    /// Relevance score per chunk. Empty when nothing had to be dropped.
    pub scores: Vec<f64>,
    #[serde(default)]
    pub answers: Vec<String>,
    pub chunks: Vec<Chunk>,
    pub prompt: String,
}

fn chunk_one(
    doc: &Document,
    kind: ChunkerKind,
    config: &PipelineConfig,
    segmenter: Option<&Segmenter>,
) -> Result<ChunkRecord, PipelineError> {
    let chunked = match kind {
        ChunkerKind::Dynamic => segmenter
            .expect("dynamic chunking needs a segmenter")
            .chunk_document(doc)
            .map_err(|source| PipelineError::Segment { id: doc.id.clone(), source })?,
        ChunkerKind::Fixed => ChunkedDocument {
            id: doc.id.clone(),
            initial: doc.initial.clone(),
            question: doc.question.clone(),
            answers: doc.answers.clone(),
            chunks: fixed_chunks(&doc.context, config.segmentation.chunk_len, &WordPunct),
            distances: Vec::new(),
        },
    };
    if chunked.context() != doc.context {
        return Err(PipelineError::Invariant(format!("document {}: chunks do not rebuild the context", doc.id)));
    }
    Ok(ChunkRecord { chunker: kind, doc: chunked })
}

fn build_embedder(config: &PipelineConfig) -> Result<Box<dyn Embedder>, PipelineError> {
    config.embedder.build().map_err(|e| PipelineError::Backend(e.to_string()))
}

fn build_encoder(config: &PipelineConfig) -> Result<Box<dyn Encoder>, PipelineError> {
    config.encoder.build().map_err(|e| PipelineError::Backend(e.to_string()))
}

/// Chunks every document, in input order.
pub fn chunk_documents(
    docs: &[Document],
    config: &PipelineConfig,
    kind: ChunkerKind,
) -> Result<Vec<ChunkRecord>, PipelineError> {
    let embedder = build_embedder(config)?;
    let segmenter = match kind {
        ChunkerKind::Dynamic => Some(
            Segmenter::new(config.segmentation.clone(), embedder.as_ref())
                .map_err(|e| PipelineError::Config(e.to_string()))?,
        ),
        ChunkerKind::Fixed => None,
    };
    docs.par_iter().map(|d| chunk_one(d, kind, config, segmenter.as_ref())).collect()
}

/// Reads a corpus, chunks it and writes the chunk file.
pub fn cmd_chunk(
    input: &Path,
    output: &Path,
    config: &PipelineConfig,
    kind: ChunkerKind,
    mode: IngestMode,
) -> Result<Vec<ChunkRecord>, PipelineError> {
    let docs = ingest(input, mode)?.documents;
    let start = Instant::now();
    let records = chunk_documents(&docs, config, kind)?;
    let mut timings = StageTimings::default();
    timings.record("chunk", start.elapsed().as_secs_f64());
    write_jsonl(output, &records)?;
    timings.save_for(output)?;
    Ok(records)
}

enum Scorer<'a> {
    Classifier(&'a dyn Encoder, &'a MlpModel),
    Cosine(&'a dyn Embedder),
}

fn unscored(chunks: &[Chunk]) -> Vec<ScoredChunk> {
    chunks
        .iter()
        .enumerate()
        .map(|(i, c)| ScoredChunk { chunk: c.clone(), score_t: 0.0, score_f: 0.0, original_index: i })
        .collect()
}

fn check_selection(id: &str, result: &SelectionResult, target: usize) -> Result<(), PipelineError> {
    let idx = result.selected_indices();
    if idx.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PipelineError::Invariant(format!("document {id}: selection out of order")));
    }
    if result.alpha_c > 1.0 && result.total_tokens > target {
        return Err(PipelineError::Invariant(format!(
            "document {id}: selected {} tokens over the target {target}",
            result.total_tokens
        )));
    }
    Ok(())
}

fn select_one(
    doc: &ChunkedDocument,
    chunker: ChunkerKind,
    selector: SelectorKind,
    scorer: &Scorer,
    config: &PipelineConfig,
) -> Result<PromptRecord, PipelineError> {
    let wrap = |source: SelectError| PipelineError::Select { id: doc.id.clone(), source };
    let context_tokens = doc.context_tokens();
    let alpha_c = compression_ratio(context_tokens, config.target_len).map_err(wrap)?;
    let scored = if alpha_c <= 1.0 {
        unscored(&doc.chunks)
    } else {
        match scorer {
            Scorer::Classifier(encoder, model) => score_chunks(&doc.chunks, &doc.question, *encoder, model),
            Scorer::Cosine(embedder) => score_chunks_cosine(&doc.chunks, &doc.question, *embedder),
        }
        .map_err(wrap)?
    };
    let result = select(&scored, alpha_c, config.target_len);
    check_selection(&doc.id, &result, config.target_len)?;
    let prompt = assemble(doc, &result, &config.template()).map_err(wrap)?;
    let prompt_tokens = count_tokens(&prompt);
    if prompt_tokens > config.max_len {
        log::warn!("document {}: prompt has {prompt_tokens} tokens, over max_len {}", doc.id, config.max_len);
    }
    Ok(PromptRecord {
        id: doc.id.clone(),
        chunker,
        selector,
        alpha_c,
        context_tokens,
        selected_tokens: result.total_tokens,
        prompt_tokens,
        selected: result.selected_indices(),
        dropped: result.dropped.clone(),
        scores: if alpha_c <= 1.0 { Vec::new() } else { scored.iter().map(|s| s.score_t).collect() },
        answers: doc.answers.clone(),
        chunks: doc.chunks.clone(),
        prompt,
    })
}

/// Scores, selects and assembles a prompt for every chunked document.
///
/// `chunker` forces a chunking scheme: records produced by another scheme are
/// re-chunked from their rebuilt context first. The classifier selector needs
/// `model`, whose fingerprint must match the configured encoder.
pub fn select_documents(
    records: &[ChunkRecord],
    config: &PipelineConfig,
    model: Option<&MlpModel>,
    selector: SelectorKind,
    chunker: Option<ChunkerKind>,
) -> Result<Vec<PromptRecord>, PipelineError> {
    let embedder = build_embedder(config)?;
    let encoder = build_encoder(config)?;
    let scorer = match selector {
        SelectorKind::Classifier => {
            let model = model.ok_or_else(|| PipelineError::Usage("the classifier selector needs a model".into()))?;
            let found = encoder.fingerprint();
            if model.fingerprint != found {
                return Err(ModelError::Fingerprint { expected: found, found: model.fingerprint.clone() }.into());
            }
            Scorer::Classifier(encoder.as_ref(), model)
        }
        SelectorKind::Cosine => Scorer::Cosine(embedder.as_ref()),
    };

    let stale: Vec<Document> = records
        .iter()
        .filter(|r| chunker.is_some_and(|k| k != r.chunker))
        .map(|r| {
            let mut d = Document::new(r.doc.id.clone(), r.doc.context(), r.doc.question.clone());
            d.initial = r.doc.initial.clone();
            d.answers = r.doc.answers.clone();
            d
        })
        .collect();
    let mut rechunked = match chunker {
        Some(kind) if !stale.is_empty() => chunk_documents(&stale, config, kind)?.into_iter(),
        _ => Vec::new().into_iter(),
    };
    let records: Vec<ChunkRecord> = records
        .iter()
        .map(|r| match chunker {
            Some(k) if k != r.chunker => rechunked.next().expect("one per stale record"),
            _ => r.clone(),
        })
        .collect();

    records
        .par_iter()
        .map(|r| select_one(&r.doc, r.chunker, selector, &scorer, config))
        .collect()
}

/// Reads a chunk file, selects and writes the prompts file. Stage timings of
/// the chunk file are carried into the prompts sidecar.
pub fn cmd_select(
    input: &Path,
    model_path: Option<&Path>,
    output: &Path,
    config: &PipelineConfig,
    selector: SelectorKind,
    chunker: Option<ChunkerKind>,
) -> Result<Vec<PromptRecord>, PipelineError> {
    let records: Vec<ChunkRecord> = read_jsonl(input)?;
    let model = match (selector, model_path) {
        (SelectorKind::Classifier, Some(p)) => Some(load_model(p, Some(&config.encoder.fingerprint()))?),
        (SelectorKind::Classifier, None) => {
            return Err(PipelineError::Usage("--model is required with the classifier selector".into()))
        }
        (SelectorKind::Cosine, _) => None,
    };
    let start = Instant::now();
    let prompts = select_documents(&records, config, model.as_ref(), selector, chunker)?;
    let mut timings = StageTimings::load_for(input);
    timings.record("select", start.elapsed().as_secs_f64());
    write_jsonl(output, &prompts)?;
    timings.save_for(output)?;
    Ok(prompts)
}
