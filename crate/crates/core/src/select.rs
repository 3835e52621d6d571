//! Chunk scoring, budgeted top-k selection and prompt assembly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::MlpModel;
use crate::distill::distill;
use crate::document::ChunkedDocument;
use crate::embed::{EmbedError, Embedder};
use crate::encoder::{EncodeError, Encoder, EncoderFingerprint};
use crate::segment::Chunk;
use crate::template::PromptTemplate;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("chunk {index}: {source}")]
    Encode { index: usize, source: EncodeError },
    #[error("chunk {index}: {message}")]
    Score { index: usize, message: String },
    #[error("model fingerprint {model:?} does not match encoder {encoder:?}")]
    Fingerprint { model: EncoderFingerprint, encoder: EncoderFingerprint },
    #[error("target length must be at least 1 token")]
    ZeroTarget,
    #[error("target length {target} exceeds context window {window}")]
    TargetAboveWindow { target: usize, window: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("selection does not belong to this document: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub score_t: f64,
    pub score_f: f64,
    pub original_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Kept chunks in original order.
    pub selected: Vec<ScoredChunk>,
    pub alpha_c: f64,
    pub total_tokens: usize,
    /// Original indices of the chunks left out, ascending.
    pub dropped: Vec<usize>,
}

impl SelectionResult {
    pub fn selected_indices(&self) -> Vec<usize> {
        self.selected.iter().map(|s| s.original_index).collect()
    }
}

/// Scores every chunk against `question` with the classifier.
pub fn score_chunks(
    chunks: &[Chunk],
    question: &str,
    encoder: &dyn Encoder,
    model: &MlpModel,
) -> Result<Vec<ScoredChunk>, SelectError> {
    let enc_fp = encoder.fingerprint();
    if enc_fp != model.fingerprint {
        return Err(SelectError::Fingerprint { model: model.fingerprint.clone(), encoder: enc_fp });
    }
    chunks
        .par_iter()
        .enumerate()
        .map(|(index, chunk)| {
            let pair = encoder
                .encode(&chunk.text, question)
                .map_err(|source| SelectError::Encode { index, source })?;
            let features =
                distill(&pair).map_err(|e| SelectError::Score { index, message: e.to_string() })?;
            let logits = model
                .forward(&features)
                .map_err(|e| SelectError::Score { index, message: e.to_string() })?;
            Ok(ScoredChunk {
                chunk: chunk.clone(),
                score_t: logits.prob_t(),
                score_f: logits.prob_f(),
                original_index: index,
            })
        })
        .collect()
}

/// Baseline scorer: cosine similarity between chunk and question embeddings,
/// mapped from `[-1, 1]` onto `[0, 1]`.
pub fn score_chunks_cosine(
    chunks: &[Chunk],
    question: &str,
    embedder: &dyn Embedder,
) -> Result<Vec<ScoredChunk>, SelectError> {
    if chunks.is_empty() {
        return Ok(Vec::new());
    }
    let mut texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
    texts.push(question.to_string());
    let mut vectors = embedder.embed_batch(&texts)?;
    let q = vectors.pop().expect("question vector");
    Ok(chunks
        .iter()
        .zip(&vectors)
        .enumerate()
        .map(|(i, (chunk, v))| {
            let sim = v.cosine(&q).unwrap_or(0.0);
            let score = (1.0 + sim) / 2.0;
            ScoredChunk { chunk: chunk.clone(), score_t: score, score_f: 1.0 - score, original_index: i }
        })
        .collect())
}

/// `l_C / l_T`.
pub fn compression_ratio(context_tokens: usize, target: usize) -> Result<f64, SelectError> {
    if target == 0 {
        return Err(SelectError::ZeroTarget);
    }
    Ok(context_tokens as f64 / target as f64)
}

/// Number of chunks kept before the token trim: `max(1, floor(count / alpha_c))`.
pub fn keep_count(chunk_count: usize, alpha_c: f64) -> usize {
    if alpha_c <= 1.0 {
        return chunk_count;
    }
    (((chunk_count as f64) / alpha_c + 1e-9).floor() as usize).clamp(1, chunk_count.max(1))
}

fn rank(a: &ScoredChunk, b: &ScoredChunk) -> std::cmp::Ordering {
    b.score_t.total_cmp(&a.score_t).then(a.original_index.cmp(&b.original_index))
}

/// Keeps the top-scoring chunks under the target length.
///
/// With `alpha_c <= 1` everything is kept. Otherwise the best
/// [`keep_count`] chunks by `score_t` are taken (ties favour earlier chunks)
/// and the lowest-scoring survivors are dropped until the token total fits
/// `target`.
pub fn select(scored: &[ScoredChunk], alpha_c: f64, target: usize) -> SelectionResult {
    let mut ranked: Vec<&ScoredChunk> = scored.iter().collect();
    let keep = if alpha_c <= 1.0 { ranked.len() } else { keep_count(ranked.len(), alpha_c) };
    ranked.sort_by(|a, b| rank(a, b));
    ranked.truncate(keep);
    if alpha_c > 1.0 {
        let mut total: usize = ranked.iter().map(|s| s.chunk.token_len).sum();
        while total > target {
            let Some(lowest) = ranked.pop() else { break };
            total -= lowest.chunk.token_len;
        }
    }
    let mut selected: Vec<ScoredChunk> = ranked.into_iter().cloned().collect();
    selected.sort_by_key(|s| s.original_index);
    let kept: std::collections::HashSet<usize> = selected.iter().map(|s| s.original_index).collect();
    let mut dropped: Vec<usize> =
        scored.iter().map(|s| s.original_index).filter(|i| !kept.contains(i)).collect();
    dropped.sort_unstable();
    let total_tokens = selected.iter().map(|s| s.chunk.token_len).sum();
    SelectionResult { selected, alpha_c, total_tokens, dropped }
}

/// Selected chunk texts in order. Consecutive chunks are joined as-is, gaps
/// become a single space.
pub fn join_selected(result: &SelectionResult) -> String {
    let mut out = String::new();
    let mut prev: Option<usize> = None;
    for s in &result.selected {
        if let Some(p) = prev {
            if s.original_index != p + 1 {
                out.push(' ');
            }
        }
        out.push_str(&s.chunk.text);
        prev = Some(s.original_index);
    }
    out
}

/// Renders the compressed prompt: the initial text, then the template with the
/// selected context and the question filled in.
pub fn assemble(
    doc: &ChunkedDocument,
    result: &SelectionResult,
    template: &PromptTemplate,
) -> Result<String, SelectError> {
    for s in &result.selected {
        match doc.chunks.get(s.original_index) {
            Some(c) if c.text == s.chunk.text => {}
            _ => {
                return Err(SelectError::Mismatch(format!(
                    "chunk {} is not chunk {} of document {}",
                    s.original_index, s.original_index, doc.id
                )))
            }
        }
    }
    let body = template.render(&join_selected(result), &doc.question);
    Ok(format!("{}{}", doc.initial, body))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(lens: &[usize], scores: &[f64]) -> Vec<ScoredChunk> {
        let mut pos = 0;
        lens.iter()
            .zip(scores)
            .enumerate()
            .map(|(i, (&len, &s))| {
                let text = format!(" c{i}");
                let chunk = Chunk {
                    sentence_range: (i, i),
                    byte_start: pos,
                    byte_end: pos + text.len(),
                    token_len: len,
                    text,
                };
                pos = chunk.byte_end;
                ScoredChunk { chunk, score_t: s, score_f: 1.0 - s, original_index: i }
            })
            .collect()
    }

    #[test]
    fn ratio_cases() {
        assert_eq!(compression_ratio(14000, 7000).unwrap(), 2.0);
        let r = compression_ratio(5000, 7000).unwrap();
        assert!((r - 0.714).abs() < 1e-3);
        assert_eq!(compression_ratio(22500, 7500).unwrap(), 3.0);
        assert!(matches!(compression_ratio(10, 0), Err(SelectError::ZeroTarget)));
    }

    #[test]
    fn keep_count_rule() {
        assert_eq!(keep_count(10, 2.0), 5);
        assert_eq!(keep_count(9, 3.0), 3);
        assert_eq!(keep_count(10, 3.0), 3);
        assert_eq!(keep_count(2, 50.0), 1);
        assert_eq!(keep_count(7, 0.5), 7);
    }

    #[test]
    fn ten_chunks_half_kept() {
        let s = scored(&[10; 10], &[0.1, 0.9, 0.3, 0.8, 0.5, 0.7, 0.2, 0.6, 0.4, 0.05]);
        let r = select(&s, 2.0, 1000);
        assert_eq!(r.selected_indices(), [1, 3, 4, 5, 7]);
        assert_eq!(r.dropped, [0, 2, 6, 8, 9]);
        assert_eq!(r.total_tokens, 50);
    }

    #[test]
    fn ties_prefer_earlier_chunks() {
        let s = scored(&[10; 4], &[0.5; 4]);
        assert_eq!(select(&s, 2.0, 100).selected_indices(), [0, 1]);
    }

    #[test]
    fn under_budget_keeps_all() {
        let s = scored(&[10; 3], &[0.1, 0.2, 0.3]);
        let r = select(&s, 0.5, 100);
        assert_eq!(r.selected_indices(), [0, 1, 2]);
        assert!(r.dropped.is_empty());
    }

    #[test]
    fn token_trim_drops_lowest() {
        let s = scored(&[400, 400, 400, 400], &[0.9, 0.8, 0.7, 0.1]);
        // keep_count = 2 but 800 > 700, so the 0.8 chunk goes.
        let r = select(&s, 2.0, 700);
        assert_eq!(r.selected_indices(), [0]);
        assert_eq!(r.total_tokens, 400);
    }

    #[test]
    fn joining_marks_gaps() {
        let s = scored(&[1; 3], &[0.9, 0.1, 0.8]);
        let r = select(&s, 1.5, 100);
        assert_eq!(r.selected_indices(), [0, 2]);
        assert_eq!(join_selected(&r), " c0  c2");
        let all = select(&s, 1.0, 100);
        assert_eq!(join_selected(&all), " c0 c1 c2");
    }
}
