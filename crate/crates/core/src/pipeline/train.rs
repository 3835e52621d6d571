use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use super::{ingest, io_err, IngestMode, PipelineConfig, PipelineError, StageTimings};
use crate::classifier::{build_training_set, save_model, train, ModelError, TrainReport};
use crate::document::Document;

/// Builds the labeled set from `docs` and trains a classifier on it.
pub fn train_corpus(docs: &[Document], config: &PipelineConfig) -> Result<TrainReport, PipelineError> {
    let encoder = config.encoder.build().map_err(|e| PipelineError::Backend(e.to_string()))?;
    let set = build_training_set(docs, encoder.as_ref(), config.train.negative_ratio, config.seed)
        .map_err(|e| match e {
            ModelError::TooFewDocuments(n) => PipelineError::Usage(format!(
                "{e}. Add documents to the corpus, or set train.negative_ratio = 0 to train on \
                 positives only (found {n})"
            )),
            other => other.into(),
        })?;
    let report = train(&set, &config.train_config(), encoder.fingerprint())?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(report)
}

/// `epoch,mean_loss` rows, epochs counted from 1.
pub fn loss_csv(losses: &[f64]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, l) in losses.iter().enumerate() {
        writeln!(out, "{},{l}", i + 1).unwrap();
    }
    out
}

/// Trains on a corpus file, writes the model and its loss trace. The trace
/// goes to `loss_path`, or next to the model as `<model>.loss.csv`.
pub fn cmd_train(
    input: &Path,
    model_path: &Path,
    loss_path: Option<&Path>,
    config: &PipelineConfig,
    mode: IngestMode,
) -> Result<TrainReport, PipelineError> {
    let docs = ingest(input, mode)?.documents;
    let start = Instant::now();
    let report = train_corpus(&docs, config)?;
    let mut timings = StageTimings::default();
    timings.record("train", start.elapsed().as_secs_f64());
    save_model(&report.model, model_path)?;
    let default_loss = {
        let mut name = model_path.as_os_str().to_os_string();
        name.push(".loss.csv");
        std::path::PathBuf::from(name)
    };
    let loss_path = loss_path.unwrap_or(&default_loss);
    fs::write(loss_path, loss_csv(&report.epoch_losses)).map_err(io_err(loss_path))?;
    timings.save_for(model_path)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        assert_eq!(loss_csv(&[0.5, 0.25]), "epoch,mean_loss\n1,0.5\n2,0.25\n");
        assert_eq!(loss_csv(&[]), "epoch,mean_loss\n");
    }

    #[test]
    fn single_document_gets_guidance() {
        let docs = [Document::new("a", "Some context.", "A question?")];
        match train_corpus(&docs, &PipelineConfig::default()) {
            Err(PipelineError::Usage(msg)) => assert!(msg.contains("negative_ratio = 0"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let mut c = PipelineConfig::default();
        c.train.negative_ratio = 0.0;
        c.train.epochs = 1;
        assert!(train_corpus(&docs, &c).is_ok());
    }
}
