//! Semantic chunking and question-aware chunk selection for compressing long
//! prompts.
//!
//! The flow is: split a context into sentences, cut it into chunks where
//! adjacent sentences drift apart semantically ([`segment`]), score each chunk
//! against the question with a small classifier over encoder features
//! ([`encoder`], [`distill`], [`classifier`]) and keep the best chunks under a
//! token budget ([`select`]).

pub mod classifier;
pub mod distill;
pub mod document;
pub mod embed;
pub mod encoder;
pub mod pipeline;
pub mod segment;
pub mod select;
pub mod synth;
pub mod template;
pub mod tokenize;

pub use document::{ChunkedDocument, Document};
pub use segment::{Chunk, SegmentationConfig, Segmenter};
