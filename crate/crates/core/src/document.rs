use serde::{Deserialize, Serialize};

use crate::segment::Chunk;

/// A question-answering record: framing text, the long context and the question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub initial: String,
    pub context: String,
    #[serde(alias = "input")]
    pub question: String,
    #[serde(default)]
    pub answers: Vec<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, context: impl Into<String>, question: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            initial: String::new(),
            context: context.into(),
            question: question.into(),
            answers: Vec::new(),
        }
    }
}

/// A document whose context has been split into chunks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkedDocument {
    pub id: String,
    pub initial: String,
    pub question: String,
    #[serde(default)]
    pub answers: Vec<String>,
    pub chunks: Vec<Chunk>,
    /// Cosine distance across every sentence gap of the context, in order.
    #[serde(default)]
    pub distances: Vec<f64>,
}

impl ChunkedDocument {
    /// The original context, rebuilt from the chunks.
    pub fn context(&self) -> String {
        self.chunks.iter().map(|c| c.text.as_str()).collect()
    }

    pub fn context_tokens(&self) -> usize {
        self.chunks.iter().map(|c| c.token_len).sum()
    }
}
