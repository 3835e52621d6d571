//! Corpus-level commands: ingest, chunk, train, select, evaluate and time.
//!
//! Each command has an in-memory form and a file form. The file forms write
//! JSON Lines in input order plus a `<output>.timings.json` sidecar, so the
//! main outputs stay byte-identical across runs.

mod config;
mod eval;
mod ingest;
mod latency;
mod run;
mod train;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::ModelError;
use crate::segment::SegmentError;
use crate::select::SelectError;

pub use config::{PipelineConfig, TrainSettings, EMBED_ENDPOINT_VAR, ENCODE_ENDPOINT_VAR};
pub use eval::{cmd_eval, evaluate, summarize, EvalReport, EvalRow, EvalSummary};
pub use ingest::{ingest, parse_jsonl, IngestMode, Ingested};
pub use latency::{cmd_latency, latency_table, parse_size, LatencyRow};
pub use run::{
    chunk_documents, cmd_chunk, cmd_select, select_documents, ChunkRecord, ChunkerKind, PromptRecord,
    SelectorKind,
};
pub use train::{cmd_train, loss_csv, train_corpus};

/// Process exit status for each error class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    Input = 1,
    Backend = 2,
    Invariant = 3,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("{0}: no valid documents")]
    NoDocuments(PathBuf),
    #[error("document {id}: {source}")]
    Segment { id: String, source: SegmentError },
    #[error("document {id}: {source}")]
    Select { id: String, source: SelectError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("backend: {0}")]
    Backend(String),
    #[error("{0}")]
    Usage(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl PipelineError {
    pub fn class(&self) -> ExitClass {
        match self {
            Self::Segment { source: SegmentError::Embed(_), .. } => ExitClass::Backend,
            Self::Select { source, .. } => match source {
                SelectError::Encode { .. } | SelectError::Embed(_) => ExitClass::Backend,
                SelectError::Score { .. } | SelectError::Mismatch(_) => ExitClass::Invariant,
                _ => ExitClass::Input,
            },
            Self::Model(ModelError::Encode { .. } | ModelError::Distill { .. }) => ExitClass::Backend,
            Self::Backend(_) => ExitClass::Backend,
            Self::Invariant(_) => ExitClass::Invariant,
            _ => ExitClass::Input,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class() as i32
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

pub(crate) fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Reads a JSON Lines file of `T`, skipping blank lines. Any malformed line is
/// an error naming its line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| PipelineError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, row).expect("records serialize");
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&buf).map_err(io_err(path))
}

/// Pretty-printed JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text).map_err(io_err(path))
}

/// Wall-clock seconds per named stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StageTimings(pub BTreeMap<String, f64>);

impl StageTimings {
    pub fn record(&mut self, stage: &str, seconds: f64) {
        *self.0.entry(stage.to_string()).or_insert(0.0) += seconds;
    }

    pub fn merge(&mut self, other: &StageTimings) {
        for (k, v) in &other.0 {
            self.record(k, *v);
        }
    }

    pub fn sidecar_path(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_os_string();
        name.push(".timings.json");
        PathBuf::from(name)
    }

    /// Timings stored next to `output`, or empty when there are none.
    pub fn load_for(output: &Path) -> StageTimings {
        fs::read_to_string(Self::sidecar_path(output))
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok())
            .unwrap_or_default()
    }

    pub fn save_for(&self, output: &Path) -> Result<(), PipelineError> {
        let path = Self::sidecar_path(output);
        let text = serde_json::to_string_pretty(self).expect("timings serialize");
        fs::write(&path, text).map_err(io_err(&path))
    }
}
