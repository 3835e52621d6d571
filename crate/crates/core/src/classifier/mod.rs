//! Question-aware relevance classifier: a three-layer ReLU MLP with two
//! sigmoid heads, T (answerable) and F (unanswerable).

mod dataset;
mod persist;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::distill::{FeatureMatrix, FEATURE_ROWS};
use crate::encoder::{EncodeError, EncoderFingerprint};

pub use dataset::{build_training_set, LabeledExample};
pub use persist::{load_model, read_model, save_model, write_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use train::{accuracy, train, InputScaling, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("feature dimension {got} does not match model input {expected}")]
    InputDimension { expected: usize, got: usize },
    #[error("corpus needs at least two documents to sample negatives, got {0}")]
    TooFewDocuments(usize),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("document {id}: {source}")]
    Encode { id: String, source: EncodeError },
    #[error("document {id}: {message}")]
    Distill { id: String, message: String },
    #[error("model file I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("model file has corrupt length: {0}")]
    CorruptLength(String),
    #[error("model file checksum mismatch")]
    Checksum,
    #[error("model layer dimensions are inconsistent: {0}")]
    DimensionMismatch(String),
    #[error("model was trained for encoder {found:?}, pipeline uses {expected:?}")]
    Fingerprint { expected: EncoderFingerprint, found: EncoderFingerprint },
}

/// One affine layer, `y = x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `fan_in x fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weights: Array2::zeros((fan_in, fan_out)), bias: Array1::zeros(fan_out) }
    }

    /// Uniform init in `±sqrt(6 / (fan_in + fan_out))`, rounded to `f32`.
    fn init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || {
            f64::from(rng.random_range(-bound..bound) as f32)
        });
        Self { weights, bias: Array1::zeros(fan_out) }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }
}

/// Three-layer MLP over a flattened `6 x d` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub fingerprint: EncoderFingerprint,
    pub layers: [Dense; 3],
}

/// Raw outputs of the two heads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Logits {
    pub t: f64,
    pub f: f64,
}

impl Logits {
    pub fn prob_t(&self) -> f64 {
        sigmoid(self.t)
    }

    pub fn prob_f(&self) -> f64 {
        sigmoid(self.f)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit, in the stable form
/// `max(z, 0) - z y + ln(1 + exp(-|z|))`.
pub fn bce_loss(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

/// Mean of [`bce_loss`] over a batch.
pub fn mean_bce(logits: &[f64], labels: &[f64]) -> f64 {
    assert_eq!(logits.len(), labels.len());
    if logits.is_empty() {
        return 0.0;
    }
    logits.iter().zip(labels).map(|(&z, &y)| bce_loss(z, y)).sum::<f64>() / logits.len() as f64
}

/// Gradients with the same layout as [`MlpModel::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: [Dense; 3],
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.iter().chain(&l.bias).map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

struct Activations {
    z: [Array2<f64>; 3],
    a: [Array2<f64>; 2],
}

impl MlpModel {
    /// Seeded initialization for an encoder with the given fingerprint.
    pub fn init(fingerprint: EncoderFingerprint, hidden1: usize, hidden2: usize, seed: u64) -> Self {
        let input = FEATURE_ROWS * fingerprint.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = [
            Dense::init(input, hidden1, &mut rng),
            Dense::init(hidden1, hidden2, &mut rng),
            Dense::init(hidden2, 2, &mut rng),
        ];
        Self { fingerprint, layers }
    }

    pub fn zeros(fingerprint: EncoderFingerprint, hidden1: usize, hidden2: usize) -> Self {
        let input = FEATURE_ROWS * fingerprint.dim;
        let layers = [Dense::zeros(input, hidden1), Dense::zeros(hidden1, hidden2), Dense::zeros(hidden2, 2)];
        Self { fingerprint, layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> [usize; 4] {
        [
            self.layers[0].fan_in(),
            self.layers[1].fan_in(),
            self.layers[2].fan_in(),
            self.layers[2].fan_out(),
        ]
    }

    fn check_input(&self, got: usize) -> Result<(), ModelError> {
        let expected = self.input_dim();
        if got != expected {
            return Err(ModelError::InputDimension { expected, got });
        }
        Ok(())
    }

    fn activations(&self, x: ArrayView2<f64>) -> Activations {
        let [l0, l1, l2] = &self.layers;
        let z0 = x.dot(&l0.weights) + &l0.bias;
        let a0 = z0.mapv(|v| v.max(0.0));
        let z1 = a0.dot(&l1.weights) + &l1.bias;
        let a1 = z1.mapv(|v| v.max(0.0));
        let z2 = a1.dot(&l2.weights) + &l2.bias;
        Activations { z: [z0, z1, z2], a: [a0, a1] }
    }

    pub fn forward_flat(&self, x: ArrayView1<f64>) -> Result<Logits, ModelError> {
        self.check_input(x.len())?;
        let out = self.forward_batch(x.insert_axis(Axis(0)))?;
        Ok(out[0])
    }

    pub fn forward(&self, features: &FeatureMatrix) -> Result<Logits, ModelError> {
        let flat = Array1::from(features.flatten());
        self.forward_flat(flat.view())
    }

    /// Forward pass over the rows of `x` (`batch x input`).
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Vec<Logits>, ModelError> {
        self.check_input(x.ncols())?;
        let acts = self.activations(x);
        Ok(acts.z[2].outer_iter().map(|r| Logits { t: r[0], f: r[1] }).collect())
    }

    /// Mean over the batch of `bce(logit_T, y) + bce(logit_F, 1 - y)`.
    pub fn loss(&self, x: ArrayView2<f64>, labels: &[f64]) -> Result<f64, ModelError> {
        let logits = self.forward_batch(x)?;
        let n = labels.len() as f64;
        Ok(logits
            .iter()
            .zip(labels)
            .map(|(l, &y)| bce_loss(l.t, y) + bce_loss(l.f, 1.0 - y))
            .sum::<f64>()
            / n)
    }

    /// Exact gradients of [`MlpModel::loss`]; also returns the loss.
    pub fn backward(&self, x: ArrayView2<f64>, labels: &[f64]) -> Result<(Gradients, f64), ModelError> {
        self.check_input(x.ncols())?;
        assert_eq!(x.nrows(), labels.len(), "one label per row");
        assert!(!labels.is_empty(), "backward needs a non-empty batch");
        let n = labels.len() as f64;
        let acts = self.activations(x);
        let [z0, z1, z2] = &acts.z;
        let [a0, a1] = &acts.a;

        let mut loss = 0.0;
        let mut dz2 = Array2::zeros(z2.raw_dim());
        for (i, &y) in labels.iter().enumerate() {
            let targets = [y, 1.0 - y];
            for (k, &t) in targets.iter().enumerate() {
                let z = z2[[i, k]];
                loss += bce_loss(z, t);
                dz2[[i, k]] = (sigmoid(z) - t) / n;
            }
        }
        let [_, l1, l2] = &self.layers;
        let g2 = Dense { weights: a1.t().dot(&dz2), bias: dz2.sum_axis(Axis(0)) };
        let mut dz1 = dz2.dot(&l2.weights.t());
        dz1.zip_mut_with(z1, |d, &z| if z <= 0.0 { *d = 0.0 });
        let g1 = Dense { weights: a0.t().dot(&dz1), bias: dz1.sum_axis(Axis(0)) };
        let mut dz0 = dz1.dot(&l1.weights.t());
        dz0.zip_mut_with(z0, |d, &z| if z <= 0.0 { *d = 0.0 });
        let g0 = Dense { weights: x.t().dot(&dz0), bias: dz0.sum_axis(Axis(0)) };
        Ok((Gradients { layers: [g0, g1, g2] }, loss / n))
    }

    /// Smallest absolute pre-activation over hidden units, for kink-free
    /// finite-difference checks.
    pub fn min_hidden_preactivation(&self, x: ArrayView2<f64>) -> f64 {
        let acts = self.activations(x);
        acts.z[..2]
            .iter()
            .flat_map(|z| z.iter())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    /// `theta -= lr * grad`.
    pub fn apply(&mut self, grads: &Gradients, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.scaled_add(-lr, &g.weights);
            layer.bias.scaled_add(-lr, &g.bias);
        }
    }

    /// Rewrites the first layer so that feeding raw `x` gives what feeding
    /// `(x - mean) * scale` gave before.
    pub fn fold_input_scaling(&mut self, mean: &Array1<f64>, scale: &Array1<f64>) {
        let l0 = &mut self.layers[0];
        for ((mut row, &m), &s) in l0.weights.outer_iter_mut().zip(mean).zip(scale) {
            row *= s;
            l0.bias.scaled_add(-m, &row);
        }
    }

    /// Rounds every parameter to the nearest `f32`, the on-disk precision.
    pub fn round_to_f32(&mut self) {
        for layer in &mut self.layers {
            layer.weights.mapv_inplace(|v| f64::from(v as f32));
            layer.bias.mapv_inplace(|v| f64::from(v as f32));
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    fn fp(dim: usize) -> EncoderFingerprint {
        EncoderFingerprint { backend: "test".into(), dim, heads: 1 }
    }

    /// Loop-based reference forward pass.
    fn reference_forward(model: &MlpModel, x: &[f64]) -> (f64, f64) {
        let mut act = x.to_vec();
        for (li, layer) in model.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.fan_out()];
            for (o, out) in next.iter_mut().enumerate() {
                let mut s = layer.bias[o];
                for (i, a) in act.iter().enumerate() {
                    s += a * layer.weights[[i, o]];
                }
                *out = if li < 2 { s.max(0.0) } else { s };
            }
            act = next;
        }
        (act[0], act[1])
    }

    #[test]
    fn zero_network_is_undecided() {
        let model = MlpModel::zeros(fp(2), 3, 2);
        let x = FeatureMatrix(Array2::from_elem((6, 2), 0.7));
        let l = model.forward(&x).unwrap();
        assert_eq!((l.t, l.f), (0.0, 0.0));
        assert_eq!((l.prob_t(), l.prob_f()), (0.5, 0.5));
    }

    #[test]
    fn hand_built_sum_network() {
        let mut model = MlpModel::zeros(fp(2), 1, 1);
        model.layers[0].weights.fill(1.0);
        model.layers[1].weights.fill(1.0);
        model.layers[2].weights[[0, 0]] = 1.0;
        let x = FeatureMatrix(Array2::ones((6, 2)));
        let l = model.forward(&x).unwrap();
        assert_eq!(l.t, 12.0);
        assert_eq!(l.f, 0.0);
        assert_eq!(l.prob_t(), sigmoid(12.0));
    }

    #[test]
    fn forward_matches_loop_reference() {
        let model = MlpModel::init(fp(3), 7, 5, 42);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let x: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = model.forward_flat(ArrayView1::from(&x)).unwrap();
            let (t, f) = reference_forward(&model, &x);
            assert!((got.t - t).abs() < 1e-10 && (got.f - f).abs() < 1e-10);
        }
    }

    #[test]
    fn input_dimension_checked() {
        let model = MlpModel::init(fp(3), 4, 2, 0);
        let x = Array1::zeros(5);
        assert!(matches!(
            model.forward_flat(x.view()),
            Err(ModelError::InputDimension { expected: 18, got: 5 })
        ));
    }

    #[test]
    fn bce_cases() {
        assert!((bce_loss(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(50.0, 1.0) < 1e-20);
        assert!((bce_loss(-50.0, 1.0) - 50.0).abs() < 1e-12);
        assert!(bce_loss(-800.0, 1.0).is_finite());
        assert!((mean_bce(&[0.0, 0.0], &[1.0, 0.0]) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_matches_naive_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let z: f64 = rng.random_range(-8.0..8.0);
            let y = f64::from(rng.random_range(0..2u8));
            let s = 1.0 / (1.0 + (-z).exp());
            let naive = -(y * s.ln() + (1.0 - y) * (1.0 - s).ln());
            if naive.is_finite() {
                assert!((bce_loss(z, y) - naive).abs() < 1e-9, "z={z} y={y}");
            }
        }
    }

    #[test]
    fn saturated_correct_prediction_has_no_gradient() {
        let mut model = MlpModel::zeros(fp(1), 2, 2);
        model.layers[2].bias = Array::from(vec![40.0, -40.0]);
        let x = Array2::from_elem((1, 6), 0.3);
        let (g, loss) = model.backward(x.view(), &[1.0]).unwrap();
        assert!(g.norm() < 1e-6);
        assert!(loss < 1e-12);
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let model = MlpModel::init(fp(2), 5, 3, 3);
        let row: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let one = Array2::from_shape_vec((1, 12), row.clone()).unwrap();
        let four = Array2::from_shape_vec((4, 12), row.repeat(4)).unwrap();
        let (g1, _) = model.backward(one.view(), &[1.0]).unwrap();
        let (g4, _) = model.backward(four.view(), &[1.0; 4]).unwrap();
        for (a, b) in g1.layers.iter().zip(&g4.layers) {
            assert!((&a.weights - &b.weights).iter().all(|d| d.abs() < 1e-14));
            assert!((&a.bias - &b.bias).iter().all(|d| d.abs() < 1e-14));
        }
    }
}
