//! Fixed-length chunking baseline: cut every `len` tokens, no overlap.

use super::{split_sentences, Chunk};
use crate::tokenize::Tokenizer;

pub fn fixed_chunks(context: &str, len: usize, tokenizer: &dyn Tokenizer) -> Vec<Chunk> {
    assert!(len > 0, "chunk length must be positive");
    if context.is_empty() {
        return Vec::new();
    }
    let spans = tokenizer.spans(context);
    let sentences = split_sentences(context);
    let sentence_at = |byte: usize| {
        sentences
            .partition_point(|s| s.byte_end <= byte)
            .min(sentences.len().saturating_sub(1))
    };

    let mut cuts: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    let mut taken = 0;
    while spans.len() - taken > len {
        let end = spans[taken + len - 1].end;
        cuts.push((start, end));
        start = end;
        taken += len;
    }
    cuts.push((start, context.len()));

    let total = spans.len();
    cuts.into_iter()
        .enumerate()
        .map(|(i, (s, e))| Chunk {
            sentence_range: (sentence_at(s), sentence_at(e.saturating_sub(1).max(s))),
            byte_start: s,
            byte_end: e,
            token_len: if (i + 1) * len <= total { len } else { total - i * len },
            text: context[s..e].to_string(),
        })
        .collect()
}
