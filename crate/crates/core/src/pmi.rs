//! Caption reranking by pointwise mutual information against an n-gram prior.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{BOS, EOS};
use crate::error::{Error, Result};

/// Add-k smoothed n-gram language model over token ids. Contexts are padded
/// with `BOS`; every training sequence is terminated with `EOS`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "LmFile", into = "LmFile")]
pub struct NgramLM {
    order: usize,
    vocab_size: usize,
    add_k: f64,
    grams: HashMap<Vec<usize>, u64>,
    contexts: HashMap<Vec<usize>, u64>,
}

#[derive(Serialize, Deserialize)]
struct LmFile {
    order: usize,
    vocab_size: usize,
    add_k: f64,
    /// `(n-gram, count)` sorted by n-gram.
    counts: Vec<(Vec<usize>, u64)>,
}

impl From<LmFile> for NgramLM {
    fn from(f: LmFile) -> Self {
        let mut contexts: HashMap<Vec<usize>, u64> = HashMap::new();
        for (g, c) in &f.counts {
            *contexts
                .entry(g[..g.len().saturating_sub(1)].to_vec())
                .or_default() += c;
        }
        Self {
            order: f.order,
            vocab_size: f.vocab_size,
            add_k: f.add_k,
            grams: f.counts.into_iter().collect(),
            contexts,
        }
    }
}

impl From<NgramLM> for LmFile {
    fn from(lm: NgramLM) -> Self {
        let mut counts: Vec<(Vec<usize>, u64)> = lm.grams.into_iter().collect();
        counts.sort();
        Self {
            order: lm.order,
            vocab_size: lm.vocab_size,
            add_k: lm.add_k,
            counts,
        }
    }
}

pub fn train_lm<S: AsRef<[usize]>>(
    corpus: &[S],
    vocab_size: usize,
    order: usize,
    add_k: f64,
) -> Result<NgramLM> {
    if corpus.is_empty() {
        return Err(Error::Domain(
            "cannot train a language model on an empty corpus".into(),
        ));
    }
    if order == 0 {
        return Err(Error::Config("n-gram order must be at least 1".into()));
    }
    if !(add_k > 0.0 && add_k.is_finite()) {
        return Err(Error::Config(format!(
            "add-k constant must be positive, got {add_k}"
        )));
    }
    let mut lm = NgramLM {
        order,
        vocab_size,
        add_k,
        grams: HashMap::new(),
        contexts: HashMap::new(),
    };
    for seq in corpus {
        let padded = lm.pad(seq.as_ref(), true)?;
        for w in padded.windows(order) {
            *lm.grams.entry(w.to_vec()).or_default() += 1;
            *lm.contexts.entry(w[..order - 1].to_vec()).or_default() += 1;
        }
    }
    Ok(lm)
}

impl NgramLM {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn add_k(&self) -> f64 {
        self.add_k
    }

    /// `order - 1` copies of `BOS`, the tokens, and optionally `EOS`.
    fn pad(&self, tokens: &[usize], with_eos: bool) -> Result<Vec<usize>> {
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.vocab_size) {
            return Err(Error::Index {
                what: "language-model vocabulary",
                index: bad,
                len: self.vocab_size,
            });
        }
        let mut out = vec![BOS; self.order - 1];
        out.extend_from_slice(tokens);
        if with_eos {
            out.push(EOS);
        }
        Ok(out)
    }

    /// `p(token | context)` where `context` holds exactly `order - 1` ids.
    pub fn prob(&self, context: &[usize], token: usize) -> f64 {
        debug_assert_eq!(context.len(), self.order - 1);
        let mut gram = context.to_vec();
        gram.push(token);
        let c = self.grams.get(&gram).copied().unwrap_or(0) as f64;
        let ctx = self.contexts.get(context).copied().unwrap_or(0) as f64;
        (c + self.add_k) / (ctx + self.add_k * self.vocab_size as f64)
    }

    fn sum_logprob(&self, padded: &[usize]) -> f64 {
        padded
            .windows(self.order)
            .map(|w| self.prob(&w[..self.order - 1], w[self.order - 1]).ln())
            .sum()
    }

    /// Log-probability of the body followed by `EOS`. A trailing `EOS` in
    /// `tokens` is accepted and not doubled.
    pub fn lm_logprob(&self, tokens: &[usize]) -> Result<f64> {
        let body = match tokens.split_last() {
            Some((&EOS, rest)) => rest,
            _ => tokens,
        };
        Ok(self.sum_logprob(&self.pad(body, true)?))
    }

    /// Log-probability of `tokens` as a prefix (no `EOS` factor).
    pub fn prefix_logprob(&self, tokens: &[usize]) -> Result<f64> {
        Ok(self.sum_logprob(&self.pad(tokens, false)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lm: NgramLM = serde_json::from_str(&text)?;
        if lm.order == 0
            || lm.add_k.is_nan()
            || lm.add_k <= 0.0
            || lm.grams.keys().any(|g| g.len() != lm.order)
        {
            return Err(Error::Format(format!(
                "{}: malformed language model",
                path.display()
            )));
        }
        Ok(lm)
    }
}

/// Free-function form of [`NgramLM::lm_logprob`].
pub fn lm_logprob(tokens: &[usize], lm: &NgramLM) -> Result<f64> {
    lm.lm_logprob(tokens)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub tokens: Vec<usize>,
    /// Decoder log-likelihood.
    pub cond_logprob: f64,
    /// Language-model log-prior.
    pub prior_logprob: f64,
    /// `cond_logprob - prior_logprob`.
    pub pmi: f64,
    /// `cond_logprob - lambda * prior_logprob`; the ranking key.
    pub score: f64,
}

pub fn pmi(cond_logprob: f64, prior_logprob: f64) -> f64 {
    cond_logprob - prior_logprob
}

/// Sorts candidates by `cond - lambda * prior`, breaking ties by `cond`
/// and then by token order.
pub fn rerank(
    candidates: &[(Vec<usize>, f64)],
    lm: &NgramLM,
    lambda: f64,
) -> Result<Vec<ScoredCandidate>> {
    if candidates.is_empty() {
        return Err(Error::Domain("rerank needs at least one candidate".into()));
    }
    let mut scored = candidates
        .iter()
        .map(|(tokens, cond)| {
            let prior = lm.lm_logprob(tokens)?;
            Ok(ScoredCandidate {
                tokens: tokens.clone(),
                cond_logprob: *cond,
                prior_logprob: prior,
                pmi: pmi(*cond, prior),
                score: cond - lambda * prior,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| b.cond_logprob.total_cmp(&a.cond_logprob))
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    Ok(scored)
}
