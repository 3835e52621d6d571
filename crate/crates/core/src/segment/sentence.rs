//! Rule-based sentence splitting.

use serde::{Deserialize, Serialize};

/// One sentence of a context, with the whitespace that precedes it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub text: String,
    pub byte_start: usize,
    pub byte_end: usize,
    pub index: usize,
}

const TERMINATORS: &[char] = &['.', '?', '!', '。', '？', '！'];
const CLOSERS: &[char] = &['"', '\'', '”', '’', ')', ']', '}', '»', '」', '』'];
const ABBREVIATIONS: &[&str] = &["e.g.", "i.e.", "dr.", "mr.", "mrs.", "etc.", "vs.", "fig.", "eq."];

#[derive(Default)]
struct Nesting {
    brackets: usize,
    straight_quote: bool,
    curly_quotes: usize,
}

impl Nesting {
    fn open(&self) -> bool {
        self.brackets > 0 || self.straight_quote || self.curly_quotes > 0
    }

    fn observe(&mut self, c: char) {
        match c {
            '(' | '[' | '{' => self.brackets += 1,
            ')' | ']' | '}' => self.brackets = self.brackets.saturating_sub(1),
            '"' => self.straight_quote = !self.straight_quote,
            '“' | '«' | '「' | '『' => self.curly_quotes += 1,
            '”' | '»' | '」' | '』' => self.curly_quotes = self.curly_quotes.saturating_sub(1),
            _ => {}
        }
    }
}

fn ends_with_abbreviation(text: &str, period_end: usize) -> bool {
    let head = &text[..period_end];
    let word_start = head
        .char_indices()
        .rev()
        .find(|&(_, c)| c.is_whitespace() || matches!(c, '(' | '[' | '{' | '"' | '“'))
        .map_or(0, |(i, c)| i + c.len_utf8());
    let word = head[word_start..].to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

fn paragraph_break_follows(rest: &[(usize, char)]) -> bool {
    rest.iter()
        .take_while(|(_, c)| c.is_whitespace())
        .filter(|(_, c)| *c == '\n')
        .count()
        >= 2
}

/// Byte offsets at which a new sentence starts (excluding 0).
fn boundaries(text: &str) -> Vec<usize> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut cuts = Vec::new();
    let mut nest = Nesting::default();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c == '\n' && chars.get(i + 1).is_some_and(|&(_, n)| n == '\n') {
            // Paragraph breaks close anything left dangling.
            nest = Nesting::default();
        }
        if !TERMINATORS.contains(&c) {
            nest.observe(c);
            i += 1;
            continue;
        }
        let single_period = c == '.'
            && !chars.get(i + 1).is_some_and(|&(_, n)| TERMINATORS.contains(&n));
        let mut j = i + 1;
        while j < chars.len() && TERMINATORS.contains(&chars[j].1) {
            j += 1;
        }
        while j < chars.len() && CLOSERS.contains(&chars[j].1) {
            let closer = chars[j].1;
            if closer == '"' {
                nest.straight_quote = false;
            } else {
                nest.observe(closer);
            }
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
        let at_gap = j == chars.len() || chars[j].1.is_whitespace();
        let abbreviation = single_period && ends_with_abbreviation(text, pos + 1);
        if at_gap && paragraph_break_follows(&chars[j..]) {
            nest = Nesting::default();
        }
        if at_gap && !nest.open() && !abbreviation && end < text.len() {
            cuts.push(end);
        }
        i = j;
    }
    cuts
}

/// Splits `context` into sentences.
///
/// A sentence ends after `.`, `?`, `!`, `。`, `？` or `！` (plus any closing
/// quotes or brackets) when the next character is whitespace or the text ends,
/// unless the period closes a known abbreviation or a quote or bracket is still
/// open. Whitespace between sentences belongs to the following sentence, and a
/// whitespace-only tail is folded into the last sentence, so the span texts
/// concatenate back to `context` exactly.
pub fn split_sentences(context: &str) -> Vec<SentenceSpan> {
    if context.is_empty() {
        return Vec::new();
    }
    let mut cuts = boundaries(context);
    if let Some(&last) = cuts.last() {
        if context[last..].trim().is_empty() {
            cuts.pop();
        }
    }
    let mut spans = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for end in cuts.into_iter().chain(std::iter::once(context.len())) {
        spans.push(SentenceSpan {
            text: context[start..end].to_string(),
            byte_start: start,
            byte_end: end,
            index: spans.len(),
        });
        start = end;
    }
    spans
}
