use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ModelError;
use crate::distill::{distill, FeatureMatrix};
use crate::document::Document;
use crate::encoder::Encoder;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: FeatureMatrix,
    /// 1 when the question is answerable from the context.
    pub label: u8,
    /// Corpus index of the document the context came from.
    pub context_doc: usize,
    /// Corpus index of the document the question came from.
    pub question_doc: usize,
}

/// Picks a question donor for `ctx` among the other documents, preferring one
/// whose question text differs from `ctx`'s own.
fn donor(corpus: &[Document], ctx: usize, rng: &mut ChaCha8Rng) -> usize {
    let n = corpus.len();
    let mut pick = || {
        let j = rng.random_range(0..n - 1);
        if j >= ctx { j + 1 } else { j }
    };
    let first = pick();
    if corpus[first].question != corpus[ctx].question {
        return first;
    }
    for _ in 0..16 {
        let j = pick();
        if corpus[j].question != corpus[ctx].question {
            return j;
        }
    }
    first
}

/// Positive pairs from every document plus `floor(ratio * n)` negatives that
/// pair a context with another document's question. Shuffled with `seed`.
pub fn build_training_set(
    corpus: &[Document],
    encoder: &dyn Encoder,
    negative_ratio: f64,
    seed: u64,
) -> Result<Vec<LabeledExample>, ModelError> {
    if !(negative_ratio >= 0.0 && negative_ratio.is_finite()) {
        return Err(ModelError::InvalidConfig(format!(
            "negative ratio must be a non-negative number, got {negative_ratio}"
        )));
    }
    let n = corpus.len();
    let negatives = (negative_ratio * n as f64 + 1e-9).floor() as usize;
    if negatives > 0 && n < 2 {
        return Err(ModelError::TooFewDocuments(n));
    }
    if n == 0 {
        return Err(ModelError::EmptyDataset);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(usize, usize, u8)> = (0..n).map(|i| (i, i, 1)).collect();
    for k in 0..negatives {
        let ctx = k % n;
        pairs.push((ctx, donor(corpus, ctx, &mut rng), 0));
    }

    let mut examples = pairs
        .into_par_iter()
        .map(|(ctx, qd, label)| {
            let doc = &corpus[ctx];
            let pair = encoder
                .encode(&doc.context, &corpus[qd].question)
                .map_err(|source| ModelError::Encode { id: doc.id.clone(), source })?;
            let features = distill(&pair)
                .map_err(|e| ModelError::Distill { id: doc.id.clone(), message: e.to_string() })?;
            Ok(LabeledExample { features, label, context_doc: ctx, question_doc: qd })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    examples.shuffle(&mut rng);
    Ok(examples)
}
