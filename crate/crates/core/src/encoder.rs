//! Context/question encoders that expose final-layer hidden states and
//! per-head attention.

use std::time::Duration;

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{fnv1a64_extend, fnv_offset, hashed_bow_embed};
use crate::tokenize::{Tokenizer, WordPunct};

/// Tolerance on attention row sums accepted from remote servers.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("context and question must each contain at least one token (p={p}, q={q})")]
    EmptySegment { p: usize, q: usize },
    #[error("encoder transport failure: {0}")]
    Transport(String),
    #[error("encoder server returned status {0}")]
    Status(u16),
    #[error("sequence exceeds encoder capacity")]
    Capacity,
    #[error("malformed encoder response: {0}")]
    Protocol(String),
    #[error("encoder shape mismatch: {0}")]
    Shape(String),
    #[error("attention head {head} row {row} sums to {sum}, not 1")]
    NotStochastic { head: usize, row: usize, sum: f64 },
}

/// Identifies the feature space a classifier was trained in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderFingerprint {
    pub backend: String,
    pub dim: usize,
    pub heads: usize,
}

/// Encoding of `[context; question]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair {
    /// `(p + q) x d` final-layer hidden states.
    pub hidden: Array2<f64>,
    /// `n_h x (p + q) x (p + q)` attention, each row a distribution.
    pub attention: Array3<f64>,
    pub p: usize,
    pub q: usize,
}

impl EncodedPair {
    pub fn len(&self) -> usize {
        self.p + self.q
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.hidden.ncols()
    }

    pub fn heads(&self) -> usize {
        self.attention.len_of(Axis(0))
    }

    /// Checks the shape contract and that attention is row-stochastic within `tol`.
    pub fn validate(&self, tol: f64) -> Result<(), EncodeError> {
        if self.p == 0 || self.q == 0 {
            return Err(EncodeError::EmptySegment { p: self.p, q: self.q });
        }
        let l = self.len();
        if self.hidden.nrows() != l {
            return Err(EncodeError::Shape(format!(
                "hidden has {} rows, expected p + q = {l}",
                self.hidden.nrows()
            )));
        }
        if self.hidden.ncols() == 0 {
            return Err(EncodeError::Shape("hidden dimension is zero".into()));
        }
        let (h, r, c) = self.attention.dim();
        if h == 0 || r != l || c != l {
            return Err(EncodeError::Shape(format!(
                "attention is {h}x{r}x{c}, expected n_h x {l} x {l}"
            )));
        }
        if self.hidden.iter().any(|x| !x.is_finite()) {
            return Err(EncodeError::Shape("non-finite hidden state".into()));
        }
        for (head, mat) in self.attention.outer_iter().enumerate() {
            for (row, weights) in mat.outer_iter().enumerate() {
                let sum: f64 = weights.sum();
                let negative = weights.iter().any(|&w| w < -tol || !w.is_finite());
                if negative || (sum - 1.0).abs() > tol {
                    return Err(EncodeError::NotStochastic { head, row, sum });
                }
            }
        }
        Ok(())
    }
}

pub trait Encoder: Send + Sync {
    fn fingerprint(&self) -> EncoderFingerprint;

    /// Encodes the concatenation of `context` and `question`.
    fn encode(&self, context: &str, question: &str) -> Result<EncodedPair, EncodeError>;
}

impl<E: Encoder + ?Sized> Encoder for &E {
    fn fingerprint(&self) -> EncoderFingerprint {
        (**self).fingerprint()
    }
    fn encode(&self, context: &str, question: &str) -> Result<EncodedPair, EncodeError> {
        (**self).encode(context, question)
    }
}

impl<E: Encoder + ?Sized> Encoder for Box<E> {
    fn fingerprint(&self) -> EncoderFingerprint {
        (**self).fingerprint()
    }
    fn encode(&self, context: &str, question: &str) -> Result<EncodedPair, EncodeError> {
        (**self).encode(context, question)
    }
}

pub const SYNTHETIC_BACKEND: &str = "synthetic-fnv/v1";

/// Deterministic stand-in for a transformer.
///
/// Hidden row `i` is the hashed bag-of-words embedding of `"{token}@{i}"`.
/// Attention logits are FNV-1a of `token_i + token_j + head` scaled into
/// `[0, 1)`, softmax-normalized per row.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticEncoder {
    pub dim: usize,
    pub heads: usize,
}

impl Default for SyntheticEncoder {
    fn default() -> Self {
        Self { dim: 64, heads: 4 }
    }
}

fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl SyntheticEncoder {
    pub fn new(dim: usize, heads: usize) -> Self {
        assert!(dim >= 2 && heads >= 1, "synthetic encoder needs dim >= 2 and heads >= 1");
        Self { dim, heads }
    }

    pub fn encode_tokens<S: AsRef<str>>(
        &self,
        context: &[S],
        question: &[S],
    ) -> Result<EncodedPair, EncodeError> {
        let (p, q) = (context.len(), question.len());
        if p == 0 || q == 0 {
            return Err(EncodeError::EmptySegment { p, q });
        }
        let tokens: Vec<&str> = context.iter().chain(question).map(AsRef::as_ref).collect();
        let l = tokens.len();

        let mut hidden = Array2::zeros((l, self.dim));
        for (i, tok) in tokens.iter().enumerate() {
            let row = hashed_bow_embed(&format!("{tok}@{i}"), self.dim);
            hidden.row_mut(i).assign(&ndarray::ArrayView1::from(row.as_slice()));
        }

        let head_tags: Vec<String> = (0..self.heads).map(|h| h.to_string()).collect();
        let prefix: Vec<u64> = tokens
            .iter()
            .map(|t| fnv1a64_extend(fnv_offset(), t.as_bytes()))
            .collect();
        let mut attention = Array3::zeros((self.heads, l, l));
        for i in 0..l {
            for (j, tok_j) in tokens.iter().enumerate() {
                let pair = fnv1a64_extend(prefix[i], tok_j.as_bytes());
                for (h, tag) in head_tags.iter().enumerate() {
                    attention[[h, i, j]] = unit_interval(fnv1a64_extend(pair, tag.as_bytes()));
                }
            }
        }
        for mut head in attention.outer_iter_mut() {
            for mut row in head.outer_iter_mut() {
                let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                row.mapv_inplace(|x| (x - max).exp());
                let sum = row.sum();
                row.mapv_inplace(|x| x / sum);
            }
        }
        Ok(EncodedPair { hidden, attention, p, q })
    }
}

impl Encoder for SyntheticEncoder {
    fn fingerprint(&self) -> EncoderFingerprint {
        EncoderFingerprint { backend: SYNTHETIC_BACKEND.into(), dim: self.dim, heads: self.heads }
    }

    fn encode(&self, context: &str, question: &str) -> Result<EncodedPair, EncodeError> {
        self.encode_tokens(&WordPunct.tokenize(context), &WordPunct.tokenize(question))
    }
}

#[derive(Serialize)]
struct EncodeRequest<'a> {
    context: &'a str,
    question: &'a str,
}

#[derive(Deserialize)]
struct EncodeResponse {
    hidden: Vec<Vec<f64>>,
    attention: Vec<Vec<Vec<f64>>>,
    p: usize,
    q: usize,
}

/// Client for `POST {endpoint}/encode`.
///
/// The server tokenizes; the client adopts the `p` and `q` it reports and
/// validates every response before use.
pub struct HttpEncoder {
    endpoint: String,
    model: String,
    dim: usize,
    heads: usize,
    agent: ureq::Agent,
}

impl HttpEncoder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, dim: usize, heads: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .new_agent();
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            model: model.into(),
            dim,
            heads,
            agent,
        }
    }

    fn into_pair(&self, resp: EncodeResponse) -> Result<EncodedPair, EncodeError> {
        let l = resp.hidden.len();
        if resp.p + resp.q != l {
            return Err(EncodeError::Shape(format!(
                "server reported p={} q={} but sent {l} hidden rows",
                resp.p, resp.q
            )));
        }
        if let Some(bad) = resp.hidden.iter().position(|r| r.len() != self.dim) {
            return Err(EncodeError::Shape(format!(
                "hidden row {bad} has dimension {}, expected {}",
                resp.hidden[bad].len(),
                self.dim
            )));
        }
        if resp.attention.len() != self.heads {
            return Err(EncodeError::Shape(format!(
                "got {} attention heads, expected {}",
                resp.attention.len(),
                self.heads
            )));
        }
        for (h, head) in resp.attention.iter().enumerate() {
            if head.len() != l || head.iter().any(|r| r.len() != l) {
                return Err(EncodeError::Shape(format!("attention head {h} is not {l}x{l}")));
            }
        }
        let hidden = Array2::from_shape_vec((l, self.dim), resp.hidden.into_iter().flatten().collect())
            .map_err(|e| EncodeError::Shape(e.to_string()))?;
        let attention = Array3::from_shape_vec(
            (self.heads, l, l),
            resp.attention.into_iter().flatten().flatten().collect(),
        )
        .map_err(|e| EncodeError::Shape(e.to_string()))?;
        let pair = EncodedPair { hidden, attention, p: resp.p, q: resp.q };
        pair.validate(ROW_SUM_TOLERANCE)?;
        Ok(pair)
    }
}

impl Encoder for HttpEncoder {
    fn fingerprint(&self) -> EncoderFingerprint {
        EncoderFingerprint { backend: format!("http/{}", self.model), dim: self.dim, heads: self.heads }
    }

    fn encode(&self, context: &str, question: &str) -> Result<EncodedPair, EncodeError> {
        let url = format!("{}/encode", self.endpoint);
        let mut resp = self
            .agent
            .post(&url)
            .send_json(EncodeRequest { context, question })
            .map_err(|e| match e {
                ureq::Error::StatusCode(413) => EncodeError::Capacity,
                ureq::Error::StatusCode(code) => EncodeError::Status(code),
                other => EncodeError::Transport(other.to_string()),
            })?;
        let body: EncodeResponse = resp
            .body_mut()
            .with_config()
            .limit(1 << 30)
            .read_json()
            .map_err(|e| EncodeError::Protocol(e.to_string()))?;
        self.into_pair(body)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    Synthetic,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub dim: usize,
    pub heads: usize,
    pub endpoint: Option<String>,
    /// Model identifier recorded in classifier fingerprints for remote encoders.
    pub model: String,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self { kind: EncoderKind::Synthetic, dim: 64, heads: 4, endpoint: None, model: String::new() }
    }
}

impl EncoderSpec {
    pub fn build(&self) -> Result<Box<dyn Encoder>, EncodeError> {
        Ok(match self.kind {
            EncoderKind::Synthetic => Box::new(SyntheticEncoder::new(self.dim, self.heads)),
            EncoderKind::Http => {
                let endpoint = self.endpoint.clone().ok_or_else(|| {
                    EncodeError::Transport("http encoder requires an endpoint".into())
                })?;
                Box::new(HttpEncoder::new(endpoint, self.model.clone(), self.dim, self.heads))
            }
        })
    }

    pub fn fingerprint(&self) -> EncoderFingerprint {
        match self.kind {
            EncoderKind::Synthetic => SyntheticEncoder::new(self.dim, self.heads).fingerprint(),
            EncoderKind::Http => EncoderFingerprint {
                backend: format!("http/{}", self.model),
                dim: self.dim,
                heads: self.heads,
            },
        }
    }
}
