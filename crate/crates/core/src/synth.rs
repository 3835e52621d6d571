//! Seeded generators for test and benchmark corpora.
//!
//! Text is built from pseudo-word topic vocabularies. Every word of a topic is
//! drawn so that it hashes into the same signed bucket of a hashed
//! bag-of-words space, which gives the hash-based backends something like the
//! topical clustering of a learned embedding: same-topic text lands close,
//! different topics land far apart.
//!
//! Each topic has two disjoint word sets. Contexts use the first and questions
//! the second. Both share the topic signature in a `signature_dim` space but
//! differ in bit 6 of the hash, so in any hashed space of 128 or more buckets
//! they never share a bucket. Questions therefore paraphrase rather than
//! repeat the text that answers them.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::document::Document;
use crate::embed::fnv1a64;
use crate::tokenize::count_tokens;

/// Words shared by every topic.
const FUNCTION_WORDS: &[&str] =
    &["the", "of", "was", "in", "and", "remain", "a", "is", "by", "with", "code", "what", "near"];
const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn bucket(word: &str, dim: usize) -> (usize, bool) {
    let h = fnv1a64(word.as_bytes());
    ((h % dim as u64) as usize, h >> 63 == 0)
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(*CONSONANTS.choose(rng).unwrap() as char);
        w.push(*VOWELS.choose(rng).unwrap() as char);
    }
    if rng.random_bool(0.5) {
        w.push(*CONSONANTS.choose(rng).unwrap() as char);
    }
    w
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Topic vocabularies with one signature bucket per topic.
#[derive(Debug, Clone)]
pub struct Lexicon {
    topics: Vec<Vec<String>>,
    question_words: Vec<Vec<String>>,
    words: HashSet<String>,
}

impl Lexicon {
    /// `signature_dim` should divide the hidden size of the encoder (or equal
    /// it) for the topic signal to survive hashing there.
    pub fn generate(topics: usize, words_per_topic: usize, signature_dim: usize, seed: u64) -> Self {
        let taken: HashSet<usize> = FUNCTION_WORDS.iter().map(|w| bucket(w, signature_dim).0).collect();
        let free: Vec<usize> = (0..signature_dim).filter(|b| !taken.contains(b)).collect();
        assert!(topics <= free.len(), "at most {} topics fit in {signature_dim} buckets", free.len());
        assert!(words_per_topic >= 5, "topics need at least 5 words");

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut words: HashSet<String> = FUNCTION_WORDS.iter().map(|w| w.to_string()).collect();
        let mut topics_out = Vec::with_capacity(topics);
        let mut question_out = Vec::with_capacity(topics);
        for &b in &free[..topics] {
            let mut sets = [Vec::with_capacity(words_per_topic), Vec::with_capacity(words_per_topic)];
            while sets.iter().any(|v| v.len() < words_per_topic) {
                let w = pseudo_word(&mut rng);
                if bucket(&w, signature_dim) != (b, true) {
                    continue;
                }
                let half = ((fnv1a64(w.as_bytes()) >> 6) & 1) as usize;
                if sets[half].len() < words_per_topic && words.insert(w.clone()) {
                    sets[half].push(w);
                }
            }
            let [context, question] = sets;
            topics_out.push(context);
            question_out.push(question);
        }
        Self { topics: topics_out, question_words: question_out, words }
    }

    /// 24 topics of 24 words with 64-bucket signatures, as used by the
    /// bundled corpora.
    pub fn standard() -> Self {
        Self::generate(24, 24, 64, 1)
    }

    pub fn topic_count(&self) -> usize {
        self.topics.len()
    }

    /// Words used in context sentences about topic `t`.
    pub fn topic(&self, t: usize) -> &[String] {
        &self.topics[t]
    }

    /// Words used in questions about topic `t`.
    pub fn question_words(&self, t: usize) -> &[String] {
        &self.question_words[t]
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    fn word<'a>(&'a self, topic: usize, rng: &mut ChaCha8Rng) -> &'a str {
        self.topics[topic].choose(rng).unwrap()
    }

    /// One declarative sentence about `topic`.
    pub fn sentence(&self, topic: usize, rng: &mut ChaCha8Rng) -> String {
        let w: Vec<&str> = (0..7).map(|_| self.word(topic, rng)).collect();
        match rng.random_range(0..4) {
            0 => format!("The {} {} {} of {} {} was {}.", w[0], w[1], w[2], w[3], w[4], w[5]),
            1 => format!("In {} {} the {} {} remain {} {}.", w[0], w[1], w[2], w[3], w[4], w[5]),
            2 => format!("{} {} {} is {} by {} {} {}.", capitalize(w[0]), w[1], w[2], w[3], w[4], w[5], w[6]),
            _ => format!("{} {} with {} {} and {} {}.", capitalize(w[0]), w[1], w[2], w[3], w[4], w[5]),
        }
    }

    /// A sentence of exactly `tokens` tokens (at least 2).
    fn sized_sentence(&self, topic: usize, tokens: usize, rng: &mut ChaCha8Rng) -> String {
        assert!(tokens >= 2);
        let words: Vec<&str> = (0..tokens - 1).map(|_| self.word(topic, rng)).collect();
        format!("{}.", capitalize(&words.join(" ")))
    }

    pub fn question(&self, topic: usize, rng: &mut ChaCha8Rng) -> String {
        let w: Vec<&str> = (0..6).map(|_| self.question_words[topic].choose(rng).unwrap().as_str()).collect();
        format!("What is the {} {} {} code of {} {} {}?", w[0], w[1], w[2], w[3], w[4], w[5])
    }

    /// Text leading up to the answer in an answer sentence about `topic`.
    pub fn answer_prefix(&self, topic: usize, rng: &mut ChaCha8Rng) -> String {
        let w: Vec<&str> = (0..4).map(|_| self.word(topic, rng)).collect();
        format!("The {} {} code of {} {} is ", w[0], w[1], w[2], w[3])
    }

    /// A three-token phrase that never occurs in generated filler text.
    pub fn answer(&self, rng: &mut ChaCha8Rng) -> String {
        let mut fresh = || loop {
            let w = pseudo_word(rng);
            if !self.contains(&w) {
                break w;
            }
        };
        let (a, b) = (fresh(), fresh());
        format!("{a} {} {b}", rng.random_range(1000..10000))
    }

    fn section(&self, topic: usize, sentences: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        (0..sentences).map(|_| self.sentence(topic, rng)).collect()
    }
}

fn join_sections(sections: &[Vec<String>]) -> String {
    sections.iter().map(|s| s.join(" ")).collect::<Vec<_>>().join("\n\n")
}

/// Topics for `n` sections: neighbours differ and the topic of section
/// `gold` appears nowhere else.
fn section_topics(lex: &Lexicon, n: usize, gold: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = lex.topic_count();
    assert!(k >= 3, "need at least 3 topics");
    let gold_topic = rng.random_range(0..k);
    let mut out: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        if i == gold {
            out.push(gold_topic);
            continue;
        }
        loop {
            let t = rng.random_range(0..k);
            if t != gold_topic && (i == 0 || out[i - 1] != t) {
                out.push(t);
                break;
            }
        }
    }
    out
}

fn doc_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index as u64)
}

#[derive(Debug, Clone)]
pub struct PlantedConfig {
    pub documents: usize,
    pub sections: (usize, usize),
    pub sentences_per_section: (usize, usize),
    /// Sentences in the gold section besides the answer sentence.
    pub gold_sentences: (usize, usize),
    /// Share of documents whose answer is cut by a fixed `chunk_len` grid.
    pub straddle_fraction: f64,
    pub chunk_len: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            documents: 100,
            sections: (20, 26),
            sentences_per_section: (8, 12),
            gold_sentences: (8, 12),
            straddle_fraction: 0.5,
            chunk_len: 512,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub documents: Vec<Document>,
    /// Whether each document's answer crosses a multiple of `chunk_len` tokens.
    pub straddling: Vec<bool>,
}

/// Multi-topic documents whose gold section opens with the answer sentence,
/// right after a topic boundary.
///
/// For straddling documents the section before the gold one is padded so the
/// answer phrase
/// starts one or two tokens before a multiple of `chunk_len`; fixed-length
/// chunking then splits it. Other documents are nudged off such positions.
pub fn planted_corpus(lex: &Lexicon, config: &PlantedConfig) -> PlantedCorpus {
    let mut documents = Vec::with_capacity(config.documents);
    let mut straddling = Vec::with_capacity(config.documents);
    let straddle_count = (config.straddle_fraction * config.documents as f64).round() as usize;
    for i in 0..config.documents {
        let mut rng = doc_rng(config.seed, i);
        let n_sections = rng.random_range(config.sections.0..=config.sections.1);
        let gold = rng.random_range(1..n_sections);
        let topics = section_topics(lex, n_sections, gold, &mut rng);
        let straddle = i < straddle_count;
        let answer = lex.answer(&mut rng);

        let mut sections: Vec<Vec<String>> = topics
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let (lo, hi) = if k == gold { config.gold_sentences } else { config.sentences_per_section };
                let n = rng.random_range(lo..=hi);
                lex.section(t, n, &mut rng)
            })
            .collect();
        let before: usize = sections[..gold].iter().flatten().map(|s| count_tokens(s)).sum();
        let prefix = lex.answer_prefix(topics[gold], &mut rng);
        let mut start = before + count_tokens(&prefix);
        let l = config.chunk_len;
        if straddle {
            let offset = 1 + rng.random_range(0..2usize);
            let mut target = (start / l + 1) * l - offset;
            while target < start + 3 {
                target += l;
            }
            let pad = gold - 1;
            let mut gap = target - start;
            while gap > 40 {
                let s = lex.sentence(topics[pad], &mut rng);
                let n = count_tokens(&s);
                if gap < n + 3 {
                    break;
                }
                gap -= n;
                sections[pad].push(s);
            }
            sections[pad].push(lex.sized_sentence(topics[pad], gap, &mut rng));
            start = target;
        } else if (start + 1) % l == 0 || (start + 2) % l == 0 {
            sections[gold - 1].push(lex.sized_sentence(topics[gold - 1], 3, &mut rng));
            start += 3;
        }
        sections[gold].insert(0, format!("{prefix}{answer}."));
        debug_assert_eq!(straddle, start % l + 3 > l);

        let mut doc = Document::new(format!("planted-{i:04}"), join_sections(&sections), lex.question(topics[gold], &mut rng));
        doc.answers = vec![answer];
        documents.push(doc);
        straddling.push(straddle);
    }
    PlantedCorpus { documents, straddling }
}

/// Question-answering documents for classifier training: the gold section
/// with its answer sentence among distractor sections, `sections` in total.
/// Each context is exactly as many tokens as one of `lengths`, cycling
/// through the list.
pub fn qa_corpus(
    lex: &Lexicon,
    documents: usize,
    sections: (usize, usize),
    lengths: &[usize],
    seed: u64,
) -> Vec<Document> {
    assert!(lengths.iter().all(|&l| l >= 64), "contexts need room for a few sentences");
    (0..documents)
        .map(|i| {
            let context_tokens = lengths[i % lengths.len()];
            let mut rng = doc_rng(seed ^ 0x0a0a, i);
            let n = rng.random_range(sections.0..=sections.1).max(2);
            let gold = rng.random_range(0..n);
            let topics = section_topics(lex, n, gold, &mut rng);
            let answer = lex.answer(&mut rng);
            let answer_sentence = format!("{}{answer}.", lex.answer_prefix(topics[gold], &mut rng));

            let share = (context_tokens - count_tokens(&answer_sentence)) / n;
            let mut secs: Vec<Vec<String>> = Vec::with_capacity(n);
            let mut total = count_tokens(&answer_sentence);
            for (k, &t) in topics.iter().enumerate() {
                let budget = if k + 1 == n { context_tokens - total } else { share };
                let mut sec = Vec::new();
                let mut used = 0;
                loop {
                    let s = lex.sentence(t, &mut rng);
                    let c = count_tokens(&s);
                    if used + c + 2 > budget {
                        break;
                    }
                    used += c;
                    sec.push(s);
                }
                if k + 1 == n {
                    sec.push(lex.sized_sentence(t, budget - used, &mut rng));
                    used = budget;
                }
                total += used;
                secs.push(sec);
            }
            let at = rng.random_range(0..=secs[gold].len());
            secs[gold].insert(at, answer_sentence);
            let mut doc =
                Document::new(format!("qa-{i:04}"), join_sections(&secs), lex.question(topics[gold], &mut rng));
            doc.answers = vec![answer];
            doc
        })
        .collect()
}

/// Documents whose context is exactly their question.
pub fn identity_corpus(lex: &Lexicon, documents: usize, seed: u64) -> Vec<Document> {
    (0..documents)
        .map(|i| {
            let mut rng = doc_rng(seed ^ 0x1d1d, i);
            let topic = rng.random_range(0..lex.topic_count());
            let q = lex.question(topic, &mut rng);
            Document::new(format!("id-{i:04}"), q.clone(), q)
        })
        .collect()
}

/// One document of roughly `target_tokens` tokens (never fewer).
pub fn long_document(lex: &Lexicon, target_tokens: usize, seed: u64) -> Document {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sections = Vec::new();
    let mut total = 0;
    let mut prev = usize::MAX;
    while total < target_tokens {
        let mut topic = rng.random_range(0..lex.topic_count());
        if topic == prev {
            topic = (topic + 1) % lex.topic_count();
        }
        prev = topic;
        let n = rng.random_range(5..=9);
        let sec = lex.section(topic, n, &mut rng);
        total += sec.iter().map(|s| count_tokens(s)).sum::<usize>();
        sections.push(sec);
    }
    let q = lex.question(rng.random_range(0..lex.topic_count()), &mut rng);
    Document::new(format!("long-{target_tokens}"), join_sections(&sections), q)
}

const MESSY_PIECES: &[&str] = &[
    "Dr. Smith arrived.",
    "See Fig. 3 for details.",
    "He said \"Stop. Now.\" and left.",
    "(This is an aside. It has two sentences.)",
    "Costs rose, e.g. rent and food!",
    "Really?",
    "The end...",
    "我们走吧。",
    "真的吗？",
    "Mixed  spacing\there.",
    "vs. the others, etc. and more.",
    "A sentence without a terminator",
    "Unclosed (bracket runs on. Still inside.",
    "Café naïve façade.",
    "Numbers 3.14 and 2.0 stay whole.",
    "'Quoted.' Then more.",
    "",
];
const MESSY_SEPARATORS: &[&str] = &[" ", "  ", "\n", "\n\n", "\t", " \n ", ""];

/// Text with abbreviations, quotes, brackets, CJK punctuation, odd whitespace
/// and missing terminators, for round-trip tests of the splitter.
pub fn messy_text(pieces: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    if rng.random_bool(0.2) {
        out.push_str(MESSY_SEPARATORS.choose(&mut rng).unwrap());
    }
    for _ in 0..pieces {
        out.push_str(MESSY_PIECES.choose(&mut rng).unwrap());
        out.push_str(MESSY_SEPARATORS.choose(&mut rng).unwrap());
    }
    out
}
