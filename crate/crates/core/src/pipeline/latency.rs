use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PipelineConfig, PipelineError};
use crate::classifier::MlpModel;
use crate::segment::Segmenter;
use crate::select::score_chunks;
use crate::synth::{long_document, Lexicon};
use crate::tokenize::count_tokens;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    /// Requested context length.
    pub size: usize,
    /// Actual token count of the generated document.
    pub tokens: usize,
    pub chunks: usize,
    pub chunk_secs: f64,
    pub score_secs: f64,
    /// Chunk plus score time of the fastest repeat.
    pub total_secs: f64,
    /// `total_secs` over the previous row's, absent on the first row.
    pub ratio: Option<f64>,
}

/// Parses `8k`, `16K` or `8000` as a token count (`k` is 1000).
pub fn parse_size(text: &str) -> Result<usize, PipelineError> {
    let t = text.trim();
    let (digits, mult) = match t.strip_suffix(['k', 'K']) {
        Some(d) => (d, 1000),
        None => (t, 1),
    };
    digits
        .parse::<usize>()
        .ok()
        .and_then(|n| n.checked_mul(mult))
        .filter(|&n| n > 0)
        .ok_or_else(|| PipelineError::Usage(format!("bad size {text:?}, expected e.g. 8k or 8000")))
}

/// Times chunking and classifier scoring on generated documents of each size.
///
/// Every size runs `repeats` times with fresh backends (so caches start cold)
/// and the fastest run is kept. Scoring uses an untrained model: the cost does
/// not depend on the weights.
pub fn cmd_latency(sizes: &[usize], config: &PipelineConfig, repeats: usize) -> Result<Vec<LatencyRow>, PipelineError> {
    let lex = Lexicon::standard();
    let fingerprint = config.encoder.fingerprint();
    let model = MlpModel::init(fingerprint, config.train.hidden1, config.train.hidden2, config.seed);
    let question = lex.question(0, &mut ChaCha8Rng::seed_from_u64(config.seed));
    let mut rows: Vec<LatencyRow> = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let doc = long_document(&lex, size, config.seed ^ size as u64);
        let mut best: Option<(f64, f64, usize)> = None;
        for _ in 0..repeats.max(1) {
            let embedder = config.embedder.build().map_err(|e| PipelineError::Backend(e.to_string()))?;
            let encoder = config.encoder.build().map_err(|e| PipelineError::Backend(e.to_string()))?;
            let segmenter = Segmenter::new(config.segmentation.clone(), embedder.as_ref())
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            let t0 = Instant::now();
            let (chunks, _) = segmenter
                .chunk_context(&doc.context)
                .map_err(|source| PipelineError::Segment { id: doc.id.clone(), source })?;
            let chunk_secs = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            score_chunks(&chunks, &question, encoder.as_ref(), &model)
                .map_err(|source| PipelineError::Select { id: doc.id.clone(), source })?;
            let score_secs = t1.elapsed().as_secs_f64();
            if best.is_none_or(|(c, s, _)| chunk_secs + score_secs < c + s) {
                best = Some((chunk_secs, score_secs, chunks.len()));
            }
        }
        let (chunk_secs, score_secs, chunks) = best.expect("at least one repeat");
        let total_secs = chunk_secs + score_secs;
        rows.push(LatencyRow {
            size,
            tokens: count_tokens(&doc.context),
            chunks,
            chunk_secs,
            score_secs,
            total_secs,
            ratio: rows.last().map(|prev| total_secs / prev.total_secs),
        });
    }
    Ok(rows)
}

/// Aligned text table of latency rows.
pub fn latency_table(rows: &[LatencyRow]) -> String {
    let mut out = format!("{:>8}  {:>8}  {:>6}  {:>9}  {:>9}  {:>9}  {:>6}\n", "size", "tokens", "chunks", "chunk_s", "score_s", "total_s", "ratio");
    for r in rows {
        let ratio = r.ratio.map_or("-".to_string(), |x| format!("{x:.2}"));
        writeln!(
            out,
            "{:>8}  {:>8}  {:>6}  {:>9.4}  {:>9.4}  {:>9.4}  {:>6}",
            r.size, r.tokens, r.chunks, r.chunk_secs, r.score_secs, r.total_secs, ratio
        )
        .unwrap();
    }
    out
}
