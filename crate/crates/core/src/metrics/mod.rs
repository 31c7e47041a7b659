//! Corpus BLEU and embedding-matching precision/recall/F1.

mod bleu;
mod embed;

pub use bleu::{bleu, ngram_counts, BleuBreakdown};
pub use embed::{Cooccurrence, EmbedderKind, EmbeddingProvider, OneHot, SeededRandom};

use serde::{Deserialize, Serialize};

use crate::data::is_special;
use crate::error::{Error, Result};
use crate::numerics::dot;

/// Drops `PAD`, `BOS` and `EOS`.
pub fn strip_special(tokens: &[usize]) -> Vec<usize> {
    tokens.iter().copied().filter(|&t| !is_special(t)).collect()
}

pub fn cosine_sim(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape("cosine_sim", (1, x.len()), (1, y.len())));
    }
    let nx = dot(x, x).sqrt();
    let ny = dot(y, y).sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::Domain("cosine similarity of a zero vector".into()));
    }
    Ok((dot(x, y) / (nx * ny)).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BertScoreTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl BertScoreTriple {
    pub fn new(precision: f64, recall: f64) -> Self {
        Self {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

/// Harmonic mean, 0 when `p + r <= 0`.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Greedy matching: recall averages each reference token's best match among
/// candidate tokens, precision the other way round. No idf weighting.
pub fn bertscore(
    candidate: &[usize],
    reference: &[usize],
    provider: &dyn EmbeddingProvider,
) -> Result<BertScoreTriple> {
    let cand = strip_special(candidate);
    let refs = strip_special(reference);
    if cand.is_empty() || refs.is_empty() {
        return Err(Error::Domain(
            "bertscore needs nonempty candidate and reference".into(),
        ));
    }
    let ce = cand
        .iter()
        .map(|&t| provider.embed(t))
        .collect::<Result<Vec<_>>>()?;
    let re = refs
        .iter()
        .map(|&t| provider.embed(t))
        .collect::<Result<Vec<_>>>()?;
    let mut sim = vec![0.0; ce.len() * re.len()];
    for (i, c) in ce.iter().enumerate() {
        for (j, r) in re.iter().enumerate() {
            sim[i * re.len() + j] = cosine_sim(c, r)?;
        }
    }
    let best = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::NEG_INFINITY, f64::max);
    let precision = (0..ce.len())
        .map(|i| best(&mut (0..re.len()).map(|j| sim[i * re.len() + j])))
        .sum::<f64>()
        / ce.len() as f64;
    let recall = (0..re.len())
        .map(|j| best(&mut (0..ce.len()).map(|i| sim[i * re.len() + j])))
        .sum::<f64>()
        / re.len() as f64;
    Ok(BertScoreTriple::new(precision, recall))
}
