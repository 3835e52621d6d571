use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_text, PipelineError};
use crate::classifier::TrainConfig;
use crate::embed::{EmbedderKind, EmbedderSpec};
use crate::encoder::{EncoderKind, EncoderSpec};
use crate::segment::SegmentationConfig;
use crate::template::PromptTemplate;

/// Fills `embedder.endpoint` when the config leaves it unset.
pub const EMBED_ENDPOINT_VAR: &str = "CTXSEL_EMBED_ENDPOINT";
/// Fills `encoder.endpoint` when the config leaves it unset.
pub const ENCODE_ENDPOINT_VAR: &str = "CTXSEL_ENCODE_ENDPOINT";

/// Classifier training knobs. The seed comes from [`PipelineConfig::seed`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub standardize: bool,
    /// Negatives sampled per document when building the training set.
    pub negative_ratio: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            hidden1: t.hidden1,
            hidden2: t.hidden2,
            standardize: t.standardize,
            negative_ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub segmentation: SegmentationConfig,
    pub embedder: EmbedderSpec,
    pub encoder: EncoderSpec,
    pub train: TrainSettings,
    /// Token budget for the selected context.
    pub target_len: usize,
    /// Context window of the downstream model.
    pub max_len: usize,
    /// Name of a bundled prompt template.
    pub template: String,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            segmentation: SegmentationConfig::default(),
            embedder: EmbedderSpec::default(),
            encoder: EncoderSpec::default(),
            train: TrainSettings::default(),
            target_len: 7500,
            max_len: 8192,
            template: "multifieldqa_en".into(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let config: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a TOML file, or the defaults when `path` is `None`, then applies
    /// endpoint environment variables.
    pub fn load(path: Option<&Path>) -> Result<Self, PipelineError> {
        let mut config = match path {
            Some(p) => Self::from_toml(&read_text(p)?)?,
            None => Self::default(),
        };
        config.apply_env(|k| std::env::var(k).ok());
        config.validate()?;
        Ok(config)
    }

    /// Fills unset endpoints from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if self.embedder.endpoint.is_none() {
            self.embedder.endpoint = lookup(EMBED_ENDPOINT_VAR).filter(|s| !s.is_empty());
        }
        if self.encoder.endpoint.is_none() {
            self.encoder.endpoint = lookup(ENCODE_ENDPOINT_VAR).filter(|s| !s.is_empty());
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.segmentation.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.target_len == 0 {
            return Err(PipelineError::Config("target_len must be at least 1".into()));
        }
        if self.target_len > self.max_len {
            return Err(PipelineError::Config(format!(
                "target_len {} exceeds max_len {}",
                self.target_len, self.max_len
            )));
        }
        PromptTemplate::builtin(&self.template).map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.embedder.dimension == 0 {
            return Err(PipelineError::Config("embedder.dimension must be positive".into()));
        }
        if self.encoder.dim < 2 || self.encoder.heads == 0 {
            return Err(PipelineError::Config("encoder needs dim >= 2 and heads >= 1".into()));
        }
        let t = &self.train;
        if !(t.negative_ratio >= 0.0 && t.negative_ratio.is_finite()) {
            return Err(PipelineError::Config(format!(
                "train.negative_ratio must be a non-negative number, got {}",
                t.negative_ratio
            )));
        }
        Ok(())
    }

    pub fn template(&self) -> PromptTemplate {
        PromptTemplate::builtin(&self.template).expect("validated")
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            seed: self.seed,
            hidden1: t.hidden1,
            hidden2: t.hidden2,
            standardize: t.standardize,
        }
    }

    /// True when either backend is remote.
    pub fn uses_network(&self) -> bool {
        self.embedder.kind == EmbedderKind::Http || self.encoder.kind == EncoderKind::Http
    }
}
