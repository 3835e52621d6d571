//! Token counting shared by the segmenter, the encoders and the selector.
//!
//! The default rule treats every maximal run of alphanumeric characters as one
//! token and every other non-whitespace character as a token of its own. Any
//! backend with its own notion of a token can plug in through [`Tokenizer`].

use std::ops::Range;

/// Splits text into tokens and reports their byte spans.
pub trait Tokenizer: Send + Sync {
    /// Byte ranges of every token in `text`, in order.
    fn spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.spans(text).len()
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        self.spans(text)
            .into_iter()
            .map(|r| text[r].to_string())
            .collect()
    }
}

/// Alphanumeric runs plus single punctuation marks.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordPunct;

impl Tokenizer for WordPunct {
    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut run_start: Option<usize> = None;
        for (i, c) in text.char_indices() {
            if c.is_alphanumeric() {
                if run_start.is_none() {
                    run_start = Some(i);
                }
                continue;
            }
            if let Some(s) = run_start.take() {
                out.push(s..i);
            }
            if !c.is_whitespace() {
                out.push(i..i + c.len_utf8());
            }
        }
        if let Some(s) = run_start {
            out.push(s..text.len());
        }
        out
    }

    fn count(&self, text: &str) -> usize {
        let mut n = 0;
        let mut in_run = false;
        for c in text.chars() {
            if c.is_alphanumeric() {
                if !in_run {
                    n += 1;
                    in_run = true;
                }
            } else {
                in_run = false;
                if !c.is_whitespace() {
                    n += 1;
                }
            }
        }
        n
    }
}

/// Tokenizes with the default rule.
pub fn tokenize(text: &str) -> Vec<String> {
    WordPunct.tokenize(text)
}

/// Counts tokens with the default rule.
pub fn count_tokens(text: &str) -> usize {
    WordPunct.count(text)
}
