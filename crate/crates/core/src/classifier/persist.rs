//! Binary model container.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! magic "CTXSMLP\0" | version | backend len | backend utf-8 | dim | heads
//! | layer count | layer widths (count + 1) | per layer: weights f32[in*out]
//!   row-major, bias f32[out] | crc32 of everything before it
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Dense, MlpModel, ModelError};
use crate::distill::FEATURE_ROWS;
use crate::encoder::EncoderFingerprint;

pub const MODEL_MAGIC: &[u8; 8] = b"CTXSMLP\0";
pub const MODEL_FORMAT_VERSION: u32 = 1;
const LAYERS: usize = 3;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("value fits in u32").to_le_bytes());
}

/// Serializes `model`. Parameters are narrowed to `f32`.
pub fn write_model(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    let fp = &model.fingerprint;
    put_u32(&mut out, fp.backend.len());
    out.extend_from_slice(fp.backend.as_bytes());
    put_u32(&mut out, fp.dim);
    put_u32(&mut out, fp.heads);
    put_u32(&mut out, LAYERS);
    for w in model.dims() {
        put_u32(&mut out, w);
    }
    for layer in &model.layers {
        for &v in layer.weights.iter().chain(&layer.bias) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            ModelError::CorruptLength(format!("file ends inside {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize, ModelError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, ModelError> {
        let b = self.take(n.checked_mul(4).unwrap_or(usize::MAX), what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
}

/// Parses a model file. When `expected` is given the stored encoder
/// fingerprint must equal it.
pub fn read_model(bytes: &[u8], expected: Option<&EncoderFingerprint>) -> Result<MlpModel, ModelError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(MODEL_MAGIC.len(), "magic").map_err(|_| ModelError::BadMagic)? != MODEL_MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = cur.u32("version")? as u32;
    if version != MODEL_FORMAT_VERSION {
        return Err(ModelError::Version { found: version, expected: MODEL_FORMAT_VERSION });
    }
    let name_len = cur.u32("backend length")?;
    let backend = String::from_utf8(cur.take(name_len, "backend id")?.to_vec())
        .map_err(|_| ModelError::CorruptLength("backend id is not utf-8".into()))?;
    let dim = cur.u32("dim")?;
    let heads = cur.u32("heads")?;
    let fingerprint = EncoderFingerprint { backend, dim, heads };

    let count = cur.u32("layer count")?;
    if count != LAYERS {
        return Err(ModelError::DimensionMismatch(format!("expected {LAYERS} layers, file has {count}")));
    }
    let mut widths = [0usize; LAYERS + 1];
    for w in &mut widths {
        *w = cur.u32("layer widths")?;
    }
    if widths[0] != FEATURE_ROWS * dim {
        return Err(ModelError::DimensionMismatch(format!(
            "input width {} does not match {FEATURE_ROWS} x encoder dim {dim}",
            widths[0]
        )));
    }
    if widths[LAYERS] != 2 || widths.contains(&0) {
        return Err(ModelError::DimensionMismatch(format!("layer widths {widths:?}")));
    }

    let body_len: usize = widths.windows(2).map(|w| (w[0] * w[1] + w[1]) * 4).sum();
    let expected_total = cur.pos + body_len + 4;
    if bytes.len() != expected_total {
        return Err(ModelError::CorruptLength(format!(
            "expected {expected_total} bytes, found {}",
            bytes.len()
        )));
    }

    let mut layers = Vec::with_capacity(LAYERS);
    for w in widths.windows(2) {
        let weights = Array2::from_shape_vec((w[0], w[1]), cur.f32s(w[0] * w[1], "weights")?)
            .expect("length checked above");
        let bias = Array1::from(cur.f32s(w[1], "bias")?);
        layers.push(Dense { weights, bias });
    }
    let stored = cur.u32("checksum")? as u32;
    if crc32fast::hash(&bytes[..bytes.len() - 4]) != stored {
        return Err(ModelError::Checksum);
    }

    if let Some(want) = expected {
        if *want != fingerprint {
            return Err(ModelError::Fingerprint { expected: want.clone(), found: fingerprint });
        }
    }
    let layers: [Dense; LAYERS] = layers.try_into().expect("three layers");
    let model = MlpModel { fingerprint, layers };
    if !model.is_finite() {
        return Err(ModelError::DimensionMismatch("non-finite parameter".into()));
    }
    Ok(model)
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<(), ModelError> {
    fs::write(path, write_model(model))?;
    Ok(())
}

pub fn load_model(path: &Path, expected: Option<&EncoderFingerprint>) -> Result<MlpModel, ModelError> {
    read_model(&fs::read(path)?, expected)
}
