//! Dataset prompt templates with `{context}` and `{input}` placeholders.

use thiserror::Error;

pub const CONTEXT_SLOT: &str = "{context}";
pub const INPUT_SLOT: &str = "{input}";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template is missing the {0} placeholder")]
    MissingPlaceholder(&'static str),
    #[error("unknown template {0:?}")]
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    /// Checks that both placeholders are present exactly once.
    pub fn new(text: impl Into<String>) -> Result<Self, TemplateError> {
        let text = text.into();
        for slot in [CONTEXT_SLOT, INPUT_SLOT] {
            if text.matches(slot).count() != 1 {
                return Err(TemplateError::MissingPlaceholder(slot));
            }
        }
        Ok(Self { text })
    }

    /// A bundled template by dataset name.
    pub fn builtin(name: &str) -> Result<Self, TemplateError> {
        BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| Self { text: (*t).to_string() })
            .ok_or_else(|| TemplateError::Unknown(name.to_string()))
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Substitutes both placeholders. The two slots are replaced in a single
    /// pass so placeholder-like text inside the context is left alone.
    pub fn render(&self, context: &str, question: &str) -> String {
        let c = self.text.find(CONTEXT_SLOT).expect("validated");
        let i = self.text.find(INPUT_SLOT).expect("validated");
        let (first, first_len, first_val, second, second_len, second_val) = if c < i {
            (c, CONTEXT_SLOT.len(), context, i, INPUT_SLOT.len(), question)
        } else {
            (i, INPUT_SLOT.len(), question, c, CONTEXT_SLOT.len(), context)
        };
        let mut out = String::with_capacity(self.text.len() + context.len() + question.len());
        out.push_str(&self.text[..first]);
        out.push_str(first_val);
        out.push_str(&self.text[first + first_len..second]);
        out.push_str(second_val);
        out.push_str(&self.text[second + second_len..]);
        out
    }
}

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

const ONE_PASSAGE: &str = "Please answer the following question based on the given passages. Questions and answers are only relevant to one passage. Only give me the answer and do not output any other explanation and evidence. Article: {context} Please answer the following question based on the above passages. Questions and answers are only relevant to one passage. Only give me the answer and do not output any other explanation and evidence. Question: {input} Answer:";

const BUILTIN: &[(&str, &str)] = &[
    (
        "multifieldqa_en",
        "Read the following text and answer briefly. {context} Now, answer the following question based on the above text, only give me the answer and do not output any other words. Question: {input} Answer:",
    ),
    (
        "narrativeqa",
        "You are given a story, which can be either a novel or a movie script, and a question. Answer the question as concisely as you can, using a single phrase if possible. Do not provide any explanation. Story: {context} Now, answer the question based on the story as concisely as you can, using a single phrase if possible. Do not provide any explanation. Question: {input} Answer:",
    ),
    (
        "qasper",
        "You are given a scientific article and a question. Answer the question as concisely as you can, using a single phrase or sentence if possible. If the question cannot be answered based on the information in the article, write \"unanswerable\". If the question is a yes/no question, answer \"yes\", \"no\", or \"unanswerable\". Do not provide any explanation. Article: {context} Answer the question based on the above article as concisely as you can, using a single phrase or sentence if possible. If the question cannot be answered based on the information in the article, write \"unanswerable\". If the question is a yes/no question, answer \"yes\", \"no\", or \"unanswerable\". Do not provide any explanation. Question: {input} Answer:",
    ),
    (
        "hotpotqa",
        "Answer the question based on the given passages. Only give me the answer and do not output any other words. The following are given passages.{context} Answer the question based on the given passages. Only give me the answer and do not output any other words. Question: {input} Answer:",
    ),
    (
        "2wikimqa",
        "Answer the question based on the given passages. Only give me the answer and do not output any other words. The following are given passages. {context} Answer the question based on the given passages. Only give me the answer and do not output any other words. Question: {input} Answer:",
    ),
    (
        "musique",
        "Answer the question based on the given passages. Only give me the answer and do not output any other words. The following are given passages.{context} Answer the question based on the given passages. Only give me the answer and do not output any other words. Question: {input} Answer:",
    ),
    ("loogle_sd", ONE_PASSAGE),
    ("lv_multifieldqa_en", ONE_PASSAGE),
    (
        "factrecall_en",
        "Please answer the following questions based on the given article. Article: {context} Please answer the following questions based on the above article. Question: {input} Answer:",
    ),
    ("loogle_mr", ONE_PASSAGE),
    (
        "hotpotwikiqa",
        "Answer the question based on the given passages. Questions and answers are only relevant to some passages. Only give me the answer and do not output any other explanation and evidence. Article: {context} Please answer the following question based on the above passages. Questions and answers are only relevant to some passages. Only give me the answer and do not output any other explanation and evidence. Question: {input} Answer:",
    ),
    ("loogle_cr", ONE_PASSAGE),
];
