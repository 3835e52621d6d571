//! Reduction of an [`EncodedPair`] to the six-row classifier input.
//!
//! Rows, in order: first context token, attention-pooled context, last context
//! token, first question token, attention-pooled question, last question token.
//! The pooling weights come from the head-averaged attention that question
//! tokens pay to context tokens (Q→C) and to each other (Q→Q).

use ndarray::{s, Array1, Array2, ArrayView2, ArrayView3, Axis};
use thiserror::Error;

use crate::encoder::EncodedPair;

pub const FEATURE_ROWS: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum DistillError {
    #[error("attention has no heads")]
    NoHeads,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// `6 x d` classifier input.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(pub Array2<f64>);

impl FeatureMatrix {
    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    /// Row-major flattening, length `6 * d`.
    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().copied().collect()
    }

    pub fn from_flat(values: Vec<f64>, dim: usize) -> Result<Self, DistillError> {
        Array2::from_shape_vec((FEATURE_ROWS, dim), values)
            .map(Self)
            .map_err(|e| DistillError::Shape(e.to_string()))
    }
}

/// The four blocks of a head-averaged attention matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlocks {
    pub cc: Array2<f64>,
    pub cq: Array2<f64>,
    pub qc: Array2<f64>,
    pub qq: Array2<f64>,
}

/// Mean over the head axis.
pub fn head_average(attention: ArrayView3<f64>) -> Result<Array2<f64>, DistillError> {
    attention.mean_axis(Axis(0)).ok_or(DistillError::NoHeads)
}

pub fn partition_attention(
    averaged: ArrayView2<f64>,
    p: usize,
    q: usize,
) -> Result<AttentionBlocks, DistillError> {
    let (rows, cols) = averaged.dim();
    if p == 0 || q == 0 {
        return Err(DistillError::Shape(format!("p and q must be positive (p={p}, q={q})")));
    }
    if rows != p + q || cols != p + q {
        return Err(DistillError::Shape(format!(
            "attention is {rows}x{cols} but p + q = {}",
            p + q
        )));
    }
    Ok(AttentionBlocks {
        cc: averaged.slice(s![..p, ..p]).to_owned(),
        cq: averaged.slice(s![..p, p..]).to_owned(),
        qc: averaged.slice(s![p.., ..p]).to_owned(),
        qq: averaged.slice(s![p.., p..]).to_owned(),
    })
}

/// Mean over question rows of the Q→C and Q→Q blocks.
pub fn pool_columns(
    qc: ArrayView2<f64>,
    qq: ArrayView2<f64>,
) -> Result<(Array1<f64>, Array1<f64>), DistillError> {
    let q = qc.nrows();
    if q == 0 || qq.nrows() != q || qq.ncols() != q {
        return Err(DistillError::Shape(format!(
            "Q→C block has {q} rows, Q→Q block is {}x{}",
            qq.nrows(),
            qq.ncols()
        )));
    }
    let a_c = qc.mean_axis(Axis(0)).expect("non-empty");
    let a_q = qq.mean_axis(Axis(0)).expect("non-empty");
    Ok((a_c, a_q))
}

/// Attention-weighted sums of context and question hidden states.
pub fn weighted_reps(
    hidden: ArrayView2<f64>,
    a_c: &Array1<f64>,
    a_q: &Array1<f64>,
) -> Result<(Array1<f64>, Array1<f64>), DistillError> {
    let (p, q) = (a_c.len(), a_q.len());
    if hidden.nrows() != p + q {
        return Err(DistillError::Shape(format!(
            "hidden has {} rows, weights cover {}",
            hidden.nrows(),
            p + q
        )));
    }
    let h_c = a_c.dot(&hidden.slice(s![..p, ..]));
    let h_q = a_q.dot(&hidden.slice(s![p.., ..]));
    Ok((h_c, h_q))
}

pub fn distill(pair: &EncodedPair) -> Result<FeatureMatrix, DistillError> {
    let (p, q) = (pair.p, pair.q);
    if p == 0 || q == 0 {
        return Err(DistillError::Shape(format!("p and q must be positive (p={p}, q={q})")));
    }
    let averaged = head_average(pair.attention.view())?;
    let blocks = partition_attention(averaged.view(), p, q)?;
    let (a_c, a_q) = pool_columns(blocks.qc.view(), blocks.qq.view())?;
    let hidden = pair.hidden.view();
    let (h_c, h_q) = weighted_reps(hidden, &a_c, &a_q)?;

    let d = pair.dim();
    let mut out = Array2::zeros((FEATURE_ROWS, d));
    out.row_mut(0).assign(&hidden.row(0));
    out.row_mut(1).assign(&h_c);
    out.row_mut(2).assign(&hidden.row(p - 1));
    out.row_mut(3).assign(&hidden.row(p));
    out.row_mut(4).assign(&h_q);
    out.row_mut(5).assign(&hidden.row(p + q - 1));
    Ok(FeatureMatrix(out))
}
