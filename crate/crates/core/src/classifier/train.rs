use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledExample, MlpModel, ModelError};
use crate::distill::FEATURE_ROWS;
use crate::encoder::EncoderFingerprint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden1: usize,
    pub hidden2: usize,
    /// Train on per-feature standardized inputs and fold the scaling into the
    /// first layer afterwards.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 20, learning_rate: 1e-5, batch_size: 32, seed: 0, hidden1: 128, hidden2: 32, standardize: true }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 {
            return Err(ModelError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidConfig(format!(
                "learning rate must be a non-negative number, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(ModelError::InvalidConfig("batch size and hidden widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: MlpModel,
    /// Mean training loss of each epoch, accumulated over its minibatches.
    pub epoch_losses: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Per-feature affine map `x -> (x - mean) * scale`. Features are centered
/// one by one and scaled per feature-matrix row, so each row gets unit mean
/// variance while keeping its internal proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaling {
    pub mean: Array1<f64>,
    /// One factor per feature row, or 0 for features constant over the data.
    pub scale: Array1<f64>,
}

impl InputScaling {
    pub fn fit(dataset: &[LabeledExample], dim: usize) -> Self {
        let idx: Vec<usize> = (0..dataset.len()).collect();
        let (x, _) = design_matrix(dataset, &idx, dim, None);
        let mean = x.mean_axis(Axis(0)).expect("non-empty dataset");
        let var = x.var_axis(Axis(0), 0.0);
        let row_len = dim / FEATURE_ROWS;
        let mut scale = Array1::zeros(dim);
        for (r, v) in var.exact_chunks(row_len).into_iter().enumerate() {
            let rms = v.mean().unwrap_or(0.0).sqrt();
            let s = if rms > 1e-12 { 1.0 / rms } else { 0.0 };
            for (k, &vk) in v.iter().enumerate() {
                scale[r * row_len + k] = if vk > 0.0 { s } else { 0.0 };
            }
        }
        Self { mean, scale }
    }

    fn apply(&self, mut x: Array2<f64>) -> Array2<f64> {
        x -= &self.mean;
        x *= &self.scale;
        x
    }
}

fn design_matrix(
    examples: &[LabeledExample],
    idx: &[usize],
    dim: usize,
    scaling: Option<&InputScaling>,
) -> (Array2<f64>, Vec<f64>) {
    let mut x = Array2::zeros((idx.len(), dim));
    let mut y = Vec::with_capacity(idx.len());
    for (row, &i) in idx.iter().enumerate() {
        let ex = &examples[i];
        x.row_mut(row).assign(&ArrayView1::from(ex.features.0.as_slice().expect("standard layout")));
        y.push(f64::from(ex.label));
    }
    match scaling {
        Some(s) => (s.apply(x), y),
        None => (x, y),
    }
}

/// Minibatch SGD with seeded per-epoch shuffling.
///
/// With `standardize` the network is trained on standardized inputs and the
/// scaling is then folded into the first layer, so the returned model takes
/// raw features. Parameters are rounded to `f32` at the end, so a trained
/// model survives the model file unchanged.
pub fn train(
    dataset: &[LabeledExample],
    config: &TrainConfig,
    fingerprint: EncoderFingerprint,
) -> Result<TrainReport, ModelError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut model = MlpModel::init(fingerprint, config.hidden1, config.hidden2, config.seed);
    let dim = model.input_dim();
    if let Some(bad) = dataset.iter().find(|e| e.features.0.len() != dim) {
        return Err(ModelError::InputDimension { expected: dim, got: bad.features.0.len() });
    }

    let mut warnings = Vec::new();
    let positives = dataset.iter().filter(|e| e.label == 1).count();
    if positives == 0 || positives == dataset.len() {
        let msg = format!("training set has a single class ({positives} positives of {})", dataset.len());
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let scaling = config.standardize.then(|| InputScaling::fit(dataset, dim));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (x, y) = design_matrix(dataset, batch, dim, scaling.as_ref());
            let (grads, loss) = model.backward(x.view(), &y)?;
            total += loss * batch.len() as f64;
            model.apply(&grads, config.learning_rate);
        }
        epoch_losses.push(total / dataset.len() as f64);
    }
    if let Some(s) = &scaling {
        model.fold_input_scaling(&s.mean, &s.scale);
    }
    model.round_to_f32();
    Ok(TrainReport { model, epoch_losses, warnings })
}

/// Fraction of examples where `T > 0.5` agrees with the label.
pub fn accuracy(model: &MlpModel, dataset: &[LabeledExample]) -> Result<f64, ModelError> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let idx: Vec<usize> = (0..dataset.len()).collect();
    let (x, y) = design_matrix(dataset, &idx, model.input_dim(), None);
    let logits = model.forward_batch(x.view())?;
    let correct = logits
        .iter()
        .zip(&y)
        .filter(|(l, &y)| (l.t > 0.0) == (y > 0.5))
        .count();
    Ok(correct as f64 / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::FeatureMatrix;
    use rand::Rng;

    fn fp(dim: usize) -> EncoderFingerprint {
        EncoderFingerprint { backend: "test".into(), dim, heads: 1 }
    }

    fn separable(n: usize, dim: usize, seed: u64) -> Vec<LabeledExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let direction: Vec<f64> = (0..6 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        (0..n)
            .map(|i| {
                let label = (i % 2) as u8;
                let sign = if label == 1 { 1.0 } else { -1.0 };
                let values = direction.iter().map(|d| sign * d + rng.random_range(-0.1..0.1)).collect();
                LabeledExample {
                    features: FeatureMatrix::from_flat(values, dim).unwrap(),
                    label,
                    context_doc: i,
                    question_doc: i,
                }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_leaves_init() {
        let data = separable(40, 2, 1);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            hidden1: 8,
            hidden2: 4,
            standardize: false,
            ..Default::default()
        };
        let report = train(&data, &cfg, fp(2)).unwrap();
        assert_eq!(report.model, MlpModel::init(fp(2), 8, 4, cfg.seed));
    }

    #[test]
    fn folded_scaling_matches_scaled_forward() {
        let data = separable(30, 2, 6);
        let s = InputScaling::fit(&data, 12);
        let inner = MlpModel::init(fp(2), 8, 4, 3);
        let mut folded = inner.clone();
        folded.fold_input_scaling(&s.mean, &s.scale);
        let idx: Vec<usize> = (0..data.len()).collect();
        let (raw, _) = design_matrix(&data, &idx, 12, None);
        let (scaled, _) = design_matrix(&data, &idx, 12, Some(&s));
        let a = folded.forward_batch(raw.view()).unwrap();
        let b = inner.forward_batch(scaled.view()).unwrap();
        for (a, b) in a.iter().zip(&b) {
            assert!((a.t - b.t).abs() < 1e-10 && (a.f - b.f).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_features_are_ignored() {
        let mut data = separable(20, 2, 7);
        for e in &mut data {
            e.features.0[[0, 0]] = 0.25;
        }
        let s = InputScaling::fit(&data, 12);
        assert_eq!(s.scale[0], 0.0);
        assert!(s.scale.iter().skip(1).all(|&v| v > 0.0));
    }

    #[test]
    fn same_seed_same_weights() {
        let data = separable(64, 2, 2);
        let cfg = TrainConfig { learning_rate: 1e-2, epochs: 3, hidden1: 8, hidden2: 4, seed: 7, ..Default::default() };
        let a = train(&data, &cfg, fp(2)).unwrap();
        let b = train(&data, &cfg, fp(2)).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.epoch_losses, b.epoch_losses);
        let c = train(&data, &TrainConfig { seed: 8, ..cfg }, fp(2)).unwrap();
        assert_ne!(a.model, c.model);
        assert_eq!(a.model.dims(), c.model.dims());
    }

    #[test]
    fn single_class_warns_but_trains() {
        let data: Vec<_> = separable(20, 2, 3).into_iter().filter(|e| e.label == 1).collect();
        let cfg = TrainConfig { epochs: 1, hidden1: 4, hidden2: 2, ..Default::default() };
        let report = train(&data, &cfg, fp(2)).unwrap();
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let data = separable(200, 2, 4);
        let cfg = TrainConfig { learning_rate: 1e-2, epochs: 10, hidden1: 8, hidden2: 4, ..Default::default() };
        let report = train(&data, &cfg, fp(2)).unwrap();
        assert!(report.epoch_losses.last() < report.epoch_losses.first());
        assert!(accuracy(&report.model, &data).unwrap() > 0.95);
    }

    #[test]
    fn rejects_bad_config() {
        let data = separable(4, 2, 5);
        assert!(train(&data, &TrainConfig { epochs: 0, ..Default::default() }, fp(2)).is_err());
        assert!(train(&data, &TrainConfig { learning_rate: -1.0, ..Default::default() }, fp(2)).is_err());
        assert!(matches!(train(&[], &TrainConfig::default(), fp(2)), Err(ModelError::EmptyDataset)));
    }
}
