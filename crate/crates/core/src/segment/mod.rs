//! Dynamic chunking of long contexts.
//!
//! The pipeline is: split into sentences, expand every sentence with its
//! neighbours, embed, measure the cosine distance across every sentence gap,
//! cut at the largest `1 - alpha` fraction of gaps, re-split anything longer
//! than the chunk budget, then greedily merge neighbours back up to the budget.

mod fixed;
mod sentence;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::{ChunkedDocument, Document};
use crate::embed::{EmbedError, Embedder, EmbeddingVector};
use crate::tokenize::{Tokenizer, WordPunct};

pub use fixed::fixed_chunks;
pub use sentence::{split_sentences, SentenceSpan};

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("no sentences to merge")]
    NoSentences,
    #[error("embedding {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("boundary {boundary} out of range for {sentences} sentences")]
    BoundaryOutOfRange { boundary: usize, sentences: usize },
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("invalid segmentation config: {0}")]
    InvalidConfig(String),
    #[error("embedder returned {got} vectors for {expected} texts")]
    EmbeddingCount { expected: usize, got: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// A contiguous run of sentences (or a piece of one over-long sentence).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    /// First and last sentence index, inclusive.
    pub sentence_range: (usize, usize),
    pub byte_start: usize,
    pub byte_end: usize,
    pub token_len: usize,
    pub text: String,
}

impl Chunk {
    fn from_sentences(sentences: &[SentenceSpan], tokenizer: &dyn Tokenizer) -> Self {
        let text: String = sentences.iter().map(|s| s.text.as_str()).collect();
        let first = &sentences[0];
        let last = &sentences[sentences.len() - 1];
        Self {
            sentence_range: (first.index, last.index),
            byte_start: first.byte_start,
            byte_end: last.byte_end,
            token_len: tokenizer.count(&text),
            text,
        }
    }

    /// Appends `next`, which must start where `self` ends.
    fn absorb(&mut self, next: Chunk) {
        debug_assert_eq!(self.byte_end, next.byte_start);
        self.sentence_range.1 = next.sentence_range.1;
        self.byte_end = next.byte_end;
        // Chunk seams always fall between tokens, so lengths add up.
        self.token_len += next.token_len;
        self.text.push_str(&next.text);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Token budget per chunk.
    pub chunk_len: usize,
    /// Fraction of sentence gaps that are *not* used as boundaries.
    pub alpha: f64,
    pub max_refine_depth: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self { chunk_len: 512, alpha: 0.60, max_refine_depth: 8 }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SegmentError::InvalidConfig(format!(
                "alpha must lie strictly between 0 and 1, got {}",
                self.alpha
            )));
        }
        if self.chunk_len == 0 {
            return Err(SegmentError::InvalidConfig("chunk_len must be at least 1".into()));
        }
        if self.max_refine_depth == 0 {
            return Err(SegmentError::InvalidConfig("max_refine_depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// Expands every sentence with its immediate neighbours.
///
/// Element `i` is `s[i-1] + s[i] + s[i+1]`, clipped at both ends; a single
/// sentence is returned unchanged.
pub fn merge_neighbors<S: AsRef<str>>(sentences: &[S]) -> Result<Vec<String>, SegmentError> {
    let n = sentences.len();
    if n == 0 {
        return Err(SegmentError::NoSentences);
    }
    if n == 1 {
        return Ok(vec![sentences[0].as_ref().to_string()]);
    }
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            sentences[lo..=hi].iter().map(AsRef::as_ref).collect()
        })
        .collect())
}

/// Cosine distance between consecutive embeddings.
///
/// A pair involving a zero vector gets distance 1.0.
pub fn adjacent_distances(embeddings: &[EmbeddingVector]) -> Result<Vec<f64>, SegmentError> {
    let Some(first) = embeddings.first() else {
        return Ok(Vec::new());
    };
    let dim = first.dim();
    for (index, e) in embeddings.iter().enumerate() {
        if e.dim() != dim {
            return Err(SegmentError::DimensionMismatch { index, expected: dim, got: e.dim() });
        }
    }
    Ok(embeddings
        .windows(2)
        .map(|w| match w[0].cosine(&w[1]) {
            Some(sim) => (1.0 - sim).clamp(0.0, 2.0),
            None => 1.0,
        })
        .collect())
}

/// Number of boundaries for `gaps` distances at threshold `alpha`: `ceil((1 - alpha) * gaps)`.
pub fn cut_count(alpha: f64, gaps: usize) -> usize {
    // The epsilon absorbs representation error such as (1 - 0.6) * 5 = 2.0000000000000004.
    let raw = (1.0 - alpha) * gaps as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(gaps)
}

/// Indices of the `cut_count(alpha, len)` largest distances, ascending.
///
/// Equal distances prefer the smaller index.
pub fn select_boundaries(distances: &[f64], alpha: f64) -> Result<Vec<usize>, SegmentError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(SegmentError::InvalidAlpha(alpha));
    }
    let k = cut_count(alpha, distances.len());
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..distances.len()).collect();
    let by_rank = |&a: &usize, &b: &usize| distances[b].total_cmp(&distances[a]).then(a.cmp(&b));
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, by_rank);
        order.truncate(k);
    }
    order.sort_unstable();
    Ok(order)
}

/// Splits `sentences` after every boundary index.
///
/// Boundary `b` separates `sentences[b]` from `sentences[b + 1]`.
pub fn partition(
    sentences: &[SentenceSpan],
    boundaries: &[usize],
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Chunk>, SegmentError> {
    let n = sentences.len();
    let mut cuts: Vec<usize> = boundaries.to_vec();
    cuts.sort_unstable();
    cuts.dedup();
    if let Some(&bad) = cuts.iter().find(|&&b| b + 1 >= n) {
        return Err(SegmentError::BoundaryOutOfRange { boundary: bad, sentences: n });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut chunks = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for end in cuts.into_iter().map(|b| b + 1).chain(std::iter::once(n)) {
        chunks.push(Chunk::from_sentences(&sentences[start..end], tokenizer));
        start = end;
    }
    Ok(chunks)
}

/// Cuts one sentence into pieces of at most `limit` tokens.
///
/// Each cut falls right after a token, so whitespace stays with the piece that
/// follows it.
pub fn hard_split(sentence: &SentenceSpan, limit: usize, tokenizer: &dyn Tokenizer) -> Vec<Chunk> {
    let spans = tokenizer.spans(&sentence.text);
    let mut pieces = Vec::with_capacity(spans.len() / limit.max(1) + 1);
    let mut start = 0;
    let mut consumed = 0;
    while spans.len() - consumed > limit {
        let end = spans[consumed + limit - 1].end;
        pieces.push((start, end, limit));
        start = end;
        consumed += limit;
    }
    pieces.push((start, sentence.text.len(), spans.len() - consumed));
    pieces
        .into_iter()
        .map(|(s, e, tokens)| Chunk {
            sentence_range: (sentence.index, sentence.index),
            byte_start: sentence.byte_start + s,
            byte_end: sentence.byte_start + e,
            token_len: tokens,
            text: sentence.text[s..e].to_string(),
        })
        .collect()
}

/// Greedy left-to-right merge: each output chunk absorbs as many following
/// chunks as fit within `limit` tokens.
pub fn greedy_merge(chunks: Vec<Chunk>, limit: usize) -> Vec<Chunk> {
    let mut out: Vec<Chunk> = Vec::with_capacity(chunks.len());
    for chunk in chunks {
        match out.last_mut() {
            Some(open) if open.token_len + chunk.token_len <= limit => open.absorb(chunk),
            _ => out.push(chunk),
        }
    }
    out
}

static DEFAULT_TOKENIZER: WordPunct = WordPunct;

/// Dynamic chunker bound to an embedding backend and a tokenizer.
pub struct Segmenter<'a> {
    config: SegmentationConfig,
    embedder: &'a dyn Embedder,
    tokenizer: &'a dyn Tokenizer,
}

impl<'a> Segmenter<'a> {
    pub fn new(config: SegmentationConfig, embedder: &'a dyn Embedder) -> Result<Self, SegmentError> {
        config.validate()?;
        Ok(Self { config, embedder, tokenizer: &DEFAULT_TOKENIZER })
    }

    pub fn with_tokenizer(mut self, tokenizer: &'a dyn Tokenizer) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn config(&self) -> &SegmentationConfig {
        &self.config
    }

    /// Embeds neighbour-expanded sentences and returns the gap distances.
    pub fn gap_distances(&self, sentences: &[SentenceSpan]) -> Result<Vec<f64>, SegmentError> {
        if sentences.len() < 2 {
            return Ok(Vec::new());
        }
        let texts: Vec<&str> = sentences.iter().map(|s| s.text.as_str()).collect();
        let merged = merge_neighbors(&texts)?;
        let vectors = self.embedder.embed_batch(&merged)?;
        if vectors.len() != merged.len() {
            return Err(SegmentError::EmbeddingCount { expected: merged.len(), got: vectors.len() });
        }
        adjacent_distances(&vectors)
    }

    /// One round of percentile segmentation over `sentences`.
    fn segment_once(&self, sentences: &[SentenceSpan]) -> Result<(Vec<Chunk>, Vec<f64>), SegmentError> {
        let distances = self.gap_distances(sentences)?;
        let boundaries = select_boundaries(&distances, self.config.alpha)?;
        Ok((partition(sentences, &boundaries, self.tokenizer)?, distances))
    }

    fn refine(
        &self,
        sentences: &[SentenceSpan],
        chunk: Chunk,
        depth: usize,
        out: &mut Vec<Chunk>,
    ) -> Result<(), SegmentError> {
        let limit = self.config.chunk_len;
        if chunk.token_len <= limit {
            out.push(chunk);
            return Ok(());
        }
        let inner = &sentences[chunk.sentence_range.0..=chunk.sentence_range.1];
        if inner.len() == 1 {
            out.extend(hard_split(&inner[0], limit, self.tokenizer));
            return Ok(());
        }
        if depth >= self.config.max_refine_depth {
            for s in inner {
                let single = Chunk::from_sentences(std::slice::from_ref(s), self.tokenizer);
                if single.token_len <= limit {
                    out.push(single);
                } else {
                    out.extend(hard_split(s, limit, self.tokenizer));
                }
            }
            return Ok(());
        }
        let (pieces, _) = self.segment_once(inner)?;
        for piece in pieces {
            self.refine(sentences, piece, depth + 1, out)?;
        }
        Ok(())
    }

    /// Re-splits every chunk longer than the budget, then merges greedily.
    ///
    /// `sentences` is the full sentence list the chunks index into.
    pub fn refine_and_merge(
        &self,
        sentences: &[SentenceSpan],
        chunks: Vec<Chunk>,
    ) -> Result<Vec<Chunk>, SegmentError> {
        let mut refined = Vec::with_capacity(chunks.len());
        for chunk in chunks {
            self.refine(sentences, chunk, 0, &mut refined)?;
        }
        Ok(greedy_merge(refined, self.config.chunk_len))
    }

    /// Full chunking of a context. Also returns the top-level gap distances.
    pub fn chunk_context(&self, context: &str) -> Result<(Vec<Chunk>, Vec<f64>), SegmentError> {
        let sentences = split_sentences(context);
        if sentences.is_empty() {
            return Ok((Vec::new(), Vec::new()));
        }
        let (initial, distances) = self.segment_once(&sentences)?;
        let chunks = self.refine_and_merge(&sentences, initial)?;
        Ok((chunks, distances))
    }

    pub fn chunk_document(&self, doc: &Document) -> Result<ChunkedDocument, SegmentError> {
        let (chunks, distances) = self.chunk_context(&doc.context)?;
        Ok(ChunkedDocument {
            id: doc.id.clone(),
            initial: doc.initial.clone(),
            question: doc.question.clone(),
            answers: doc.answers.clone(),
            chunks,
            distances,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashedBow;

    fn spans(texts: &[&str]) -> Vec<SentenceSpan> {
        let mut out = Vec::new();
        let mut pos = 0;
        for (index, t) in texts.iter().enumerate() {
            out.push(SentenceSpan {
                text: t.to_string(),
                byte_start: pos,
                byte_end: pos + t.len(),
                index,
            });
            pos += t.len();
        }
        out
    }

    fn fake_chunk(index: usize, token_len: usize) -> Chunk {
        Chunk {
            sentence_range: (index, index),
            byte_start: index,
            byte_end: index + 1,
            token_len,
            text: "x".into(),
        }
    }

    #[test]
    fn neighbour_merge_cases() {
        assert_eq!(merge_neighbors(&["a", "b", "c"]).unwrap(), ["ab", "abc", "bc"]);
        assert_eq!(merge_neighbors(&["a"]).unwrap(), ["a"]);
        assert_eq!(merge_neighbors(&["a", "b"]).unwrap(), ["ab", "ab"]);
        assert!(matches!(merge_neighbors::<&str>(&[]), Err(SegmentError::NoSentences)));
    }

    #[test]
    fn distance_cases() {
        let e = |v: &[f64]| EmbeddingVector(v.to_vec());
        let d = adjacent_distances(&[e(&[1.0, 0.0]), e(&[1.0, 0.0])]).unwrap();
        assert_eq!(d, [0.0]);
        let d = adjacent_distances(&[e(&[1.0, 0.0]), e(&[0.0, 1.0])]).unwrap();
        assert_eq!(d, [1.0]);
        let r = 1.0 / 2f64.sqrt();
        let d = adjacent_distances(&[e(&[1.0, 0.0]), e(&[r, r])]).unwrap();
        assert!((d[0] - (1.0 - r)).abs() < 1e-12);
        assert!((d[0] - 0.29289).abs() < 1e-5);
    }

    #[test]
    fn zero_vector_distance_is_one() {
        let d = adjacent_distances(&[EmbeddingVector::zeros(2), EmbeddingVector(vec![0.0, 1.0])]).unwrap();
        assert_eq!(d, [1.0]);
    }

    #[test]
    fn distance_dimension_mismatch() {
        let r = adjacent_distances(&[EmbeddingVector::zeros(2), EmbeddingVector::zeros(3)]);
        assert!(matches!(r, Err(SegmentError::DimensionMismatch { index: 1, .. })));
    }

    #[test]
    fn boundary_selection_cases() {
        assert_eq!(select_boundaries(&[0.1, 0.9, 0.2, 0.8], 0.5).unwrap(), [1, 3]);
        assert_eq!(select_boundaries(&[0.5, 0.5, 0.5], 0.99).unwrap(), [0]);
        assert!(select_boundaries(&[0.3, 0.7], 1.0).unwrap().is_empty());
        assert!(select_boundaries(&[], 0.6).unwrap().is_empty());
        assert!(select_boundaries(&[0.1], 1.5).is_err());
    }

    #[test]
    fn cut_count_is_exact_on_float_edges() {
        assert_eq!(cut_count(0.6, 5), 2);
        assert_eq!(cut_count(0.55, 20), 9);
        assert_eq!(cut_count(0.7, 10), 3);
        assert_eq!(cut_count(0.65, 3), 2);
        assert_eq!(cut_count(0.0, 4), 4);
    }

    #[test]
    fn partition_cases() {
        let s = spans(&["a.", " b.", " c.", " d."]);
        let one = partition(&s, &[1], &WordPunct).unwrap();
        assert_eq!(one.len(), 2);
        assert_eq!(one[0].sentence_range, (0, 1));
        assert_eq!(one[1].sentence_range, (2, 3));
        assert_eq!(one[1].text, " c. d.");
        assert_eq!(one[1].token_len, 4);

        let all = partition(&s, &[], &WordPunct).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].sentence_range, (0, 3));

        let s3 = spans(&["a.", " b.", " c."]);
        let each = partition(&s3, &[0, 1], &WordPunct).unwrap();
        assert_eq!(
            each.iter().map(|c| c.sentence_range).collect::<Vec<_>>(),
            [(0, 0), (1, 1), (2, 2)]
        );
        assert!(matches!(
            partition(&s3, &[2], &WordPunct),
            Err(SegmentError::BoundaryOutOfRange { boundary: 2, sentences: 3 })
        ));
    }

    #[test]
    fn greedy_merge_hand_simulation() {
        let chunks = (0..4).zip([100, 200, 300, 400]).map(|(i, n)| fake_chunk(i, n)).collect();
        let merged = greedy_merge(chunks, 512);
        assert_eq!(merged.iter().map(|c| c.token_len).collect::<Vec<_>>(), [300, 300, 400]);
        assert_eq!(merged[0].sentence_range, (0, 1));
    }

    #[test]
    fn compliant_chunk_is_unchanged() {
        let merged = greedy_merge(vec![fake_chunk(0, 300)], 512);
        assert_eq!(merged, vec![fake_chunk(0, 300)]);
    }

    #[test]
    fn oversized_sentence_is_hard_split() {
        let text: String = (0..1100).map(|i| format!(" w{i}")).collect();
        let sentence = SentenceSpan { byte_end: text.len(), text: text.clone(), byte_start: 0, index: 0 };
        let embedder = HashedBow::default();
        let seg = Segmenter::new(SegmentationConfig::default(), &embedder).unwrap();
        let start = partition(std::slice::from_ref(&sentence), &[], &WordPunct).unwrap();
        let out = seg.refine_and_merge(std::slice::from_ref(&sentence), start).unwrap();
        assert_eq!(out.iter().map(|c| c.token_len).collect::<Vec<_>>(), [512, 512, 76]);
        assert_eq!(out.iter().map(|c| c.text.as_str()).collect::<String>(), text);
        for c in &out {
            assert_eq!(WordPunct.count(&c.text), c.token_len);
            assert_eq!(&text[c.byte_start..c.byte_end], c.text);
        }
        assert!(out[1].text.starts_with(' '));
    }

    #[test]
    fn single_sentence_context() {
        let embedder = HashedBow::default();
        let seg = Segmenter::new(SegmentationConfig::default(), &embedder).unwrap();
        let doc = Document::new("d", "Only one sentence here.", "why?");
        let out = seg.chunk_document(&doc).unwrap();
        assert_eq!(out.chunks.len(), 1);
        assert_eq!(out.chunks[0].text, doc.context);
    }

    #[test]
    fn empty_context_keeps_framing() {
        let embedder = HashedBow::default();
        let seg = Segmenter::new(SegmentationConfig::default(), &embedder).unwrap();
        let mut doc = Document::new("d", "", "why?");
        doc.initial = "Intro".into();
        let out = seg.chunk_document(&doc).unwrap();
        assert!(out.chunks.is_empty());
        assert_eq!(out.initial, "Intro");
        assert_eq!(out.question, "why?");
    }

    #[test]
    fn rejects_bad_config() {
        let embedder = HashedBow::default();
        for cfg in [
            SegmentationConfig { alpha: 1.0, ..Default::default() },
            SegmentationConfig { alpha: 0.0, ..Default::default() },
            SegmentationConfig { chunk_len: 0, ..Default::default() },
        ] {
            assert!(Segmenter::new(cfg, &embedder).is_err());
        }
    }

    #[test]
    fn refine_reaches_budget_with_small_limit() {
        let text: String = (0..60)
            .map(|i| format!("Sentence number {i} talks about topic {}. ", i % 7))
            .collect();
        let embedder = HashedBow::default();
        let cfg = SegmentationConfig { chunk_len: 20, ..Default::default() };
        let seg = Segmenter::new(cfg, &embedder).unwrap();
        let (chunks, distances) = seg.chunk_context(&text).unwrap();
        assert_eq!(distances.len(), 59);
        assert!(chunks.iter().all(|c| c.token_len <= 20));
        assert_eq!(chunks.iter().map(|c| c.text.as_str()).collect::<String>(), text);
        for w in chunks.windows(2) {
            assert!(w[0].token_len + w[1].token_len > 20);
        }
    }
}
