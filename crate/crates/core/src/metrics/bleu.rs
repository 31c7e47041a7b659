use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::strip_special;
use crate::error::{Error, Result};

/// Sliding-window n-grams with multiplicity. Empty when `n == 0` or the
/// sequence is shorter than `n`.
pub fn ngram_counts(tokens: &[usize], n: usize) -> HashMap<&[usize], usize> {
    let mut out = HashMap::new();
    if n == 0 {
        return out;
    }
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuBreakdown {
    /// Clipped matches per order, index 0 is unigrams.
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    /// Per-order precision after smoothing; `None` where the corpus has no
    /// candidate n-grams of that order.
    pub precisions: Vec<Option<f64>>,
    pub candidate_len: usize,
    pub reference_len: usize,
    pub brevity_penalty: f64,
    /// In `[0, 100]`.
    pub score: f64,
}

/// Corpus BLEU on a 0-100 scale.
///
/// Zero-match orders are floored at `1 / (2 * total)`. Orders with no
/// candidate n-grams at all are left out of the geometric mean, so a short
/// caption matched exactly still scores 100.
pub fn bleu(
    candidates: &[Vec<usize>],
    references: &[Vec<Vec<usize>>],
    max_n: usize,
) -> Result<BleuBreakdown> {
    if candidates.is_empty() {
        return Err(Error::Domain("BLEU needs at least one candidate".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Domain(format!(
            "{} candidates but {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    if max_n == 0 {
        return Err(Error::Config("BLEU max_n must be at least 1".into()));
    }
    let mut matches = vec![0; max_n];
    let mut totals = vec![0; max_n];
    let mut c_len = 0;
    let mut r_len = 0;
    for (cand, refs) in candidates.iter().zip(references) {
        if refs.is_empty() {
            return Err(Error::Domain(
                "every candidate needs at least one reference".into(),
            ));
        }
        let cand = strip_special(cand);
        let refs: Vec<Vec<usize>> = refs.iter().map(|r| strip_special(r)).collect();
        c_len += cand.len();
        r_len += refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(cand.len()), l))
            .expect("nonempty references");

        for n in 1..=max_n {
            let mut max_ref: HashMap<&[usize], usize> = HashMap::new();
            for r in &refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            for (g, c) in ngram_counts(&cand, n) {
                totals[n - 1] += c;
                matches[n - 1] += c.min(max_ref.get(g).copied().unwrap_or(0));
            }
        }
    }

    let precisions: Vec<Option<f64>> = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| match (m, t) {
            (_, 0) => None,
            (0, t) => Some(1.0 / (2.0 * t as f64)),
            (m, t) => Some(m as f64 / t as f64),
        })
        .collect();
    let brevity_penalty = if c_len == 0 {
        0.0
    } else if c_len < r_len {
        (1.0 - r_len as f64 / c_len as f64).exp()
    } else {
        1.0
    };
    let logs: Vec<f64> = precisions.iter().flatten().map(|p| p.ln()).collect();
    let score = if logs.is_empty() {
        0.0
    } else {
        brevity_penalty * (logs.iter().sum::<f64>() / logs.len() as f64).exp() * 100.0
    };
    Ok(BleuBreakdown {
        matches,
        totals,
        precisions,
        candidate_len: c_len,
        reference_len: r_len,
        brevity_penalty,
        score,
    })
}
