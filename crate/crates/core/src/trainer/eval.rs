use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::SourceStates;
use crate::data::{fingerprint, tokenize, DatasetRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::{
    bertscore, bleu, strip_special, BertScoreTriple, BleuBreakdown, EmbeddingProvider,
};
use crate::model::Model;
use crate::pmi::{rerank, NgramLM};

#[derive(Clone, Copy, Debug)]
pub struct DecodeOptions<'a> {
    pub beam: usize,
    /// Language model and lambda for PMI reranking of the beam.
    pub pmi: Option<(&'a NgramLM, f64)>,
}

impl DecodeOptions<'_> {
    pub fn greedy() -> Self {
        Self { beam: 1, pmi: None }
    }

    pub fn is_greedy(&self) -> bool {
        self.beam == 1 && self.pmi.is_none()
    }
}

impl Model {
    /// Decodes one record's caption body (no `BOS`/`EOS`).
    pub fn caption(&self, src: &SourceStates, opts: &DecodeOptions) -> Result<Vec<usize>> {
        let tokens = if opts.is_greedy() {
            self.greedy(src)?
        } else {
            let beams = self.beam(src, opts.beam)?;
            match opts.pmi {
                None => beams
                    .into_iter()
                    .next()
                    .map(|h| h.tokens)
                    .unwrap_or_default(),
                Some((lm, lambda)) => {
                    let cands: Vec<(Vec<usize>, f64)> =
                        beams.into_iter().map(|h| (h.tokens, h.log_prob)).collect();
                    rerank(&cands, lm, lambda)?.swap_remove(0).tokens
                }
            }
        };
        Ok(strip_special(&tokens))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Model label as printed in reports (`bahdanau`, `luong`, `self`, `mami`).
    pub model: String,
    pub records: usize,
    pub beam: usize,
    pub pmi: bool,
    pub embedder: String,
    pub bleu: BleuBreakdown,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub model_fingerprint: Option<String>,
    pub data_fingerprint: String,
}

fn references(vocab: &Vocabulary, record: &DatasetRecord) -> Vec<Vec<usize>> {
    record
        .captions
        .iter()
        .map(|c| tokenize(c).iter().map(|t| vocab.id(t)).collect())
        .collect()
}

/// Per-record score against the best-matching reference (highest F1). An
/// empty candidate scores zero.
fn record_bertscore(
    cand: &[usize],
    refs: &[Vec<usize>],
    provider: &dyn EmbeddingProvider,
) -> Result<BertScoreTriple> {
    if strip_special(cand).is_empty() {
        return Ok(BertScoreTriple::default());
    }
    let mut best: Option<BertScoreTriple> = None;
    for r in refs.iter().filter(|r| !strip_special(r).is_empty()) {
        let s = bertscore(cand, r, provider)?;
        if best.is_none_or(|b| s.f1 > b.f1) {
            best = Some(s);
        }
    }
    Ok(best.unwrap_or_default())
}

/// Scores given candidate bodies (one per record) against the records'
/// captions.
pub fn evaluate_candidates(
    vocab: &Vocabulary,
    records: &[DatasetRecord],
    candidates: &[Vec<usize>],
    provider: &dyn EmbeddingProvider,
) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::Domain("cannot evaluate on an empty dataset".into()));
    }
    if candidates.len() != records.len() {
        return Err(Error::Domain(format!(
            "{} candidates for {} records",
            candidates.len(),
            records.len()
        )));
    }
    let refs: Vec<Vec<Vec<usize>>> = records.iter().map(|r| references(vocab, r)).collect();
    let breakdown = bleu(candidates, &refs, 4)?;
    let triples: Vec<BertScoreTriple> = candidates
        .par_iter()
        .zip(refs.par_iter())
        .map(|(c, r)| record_bertscore(c, r, provider))
        .collect::<Result<_>>()?;
    let n = triples.len() as f64;
    Ok(EvalReport {
        model: "candidates".into(),
        records: records.len(),
        beam: 1,
        pmi: false,
        embedder: provider.name().into(),
        bleu: breakdown,
        precision: triples.iter().map(|t| t.precision).sum::<f64>() / n,
        recall: triples.iter().map(|t| t.recall).sum::<f64>() / n,
        f1: triples.iter().map(|t| t.f1).sum::<f64>() / n,
        model_fingerprint: None,
        data_fingerprint: fingerprint(records)?,
    })
}

/// Decodes every record and reports corpus BLEU plus mean P/R/F1.
pub fn evaluate(
    model: &Model,
    records: &[DatasetRecord],
    provider: &dyn EmbeddingProvider,
    opts: &DecodeOptions,
) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::Domain("cannot evaluate on an empty dataset".into()));
    }
    if opts.beam == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let candidates: Vec<Vec<usize>> = records
        .par_iter()
        .map(|r| model.caption(&r.features, opts))
        .collect::<Result<_>>()?;
    let mut report = evaluate_candidates(&model.vocab, records, &candidates, provider)?;
    report.model = model.mechanism.report_label().into();
    report.beam = opts.beam;
    report.pmi = opts.pmi.is_some();
    report.model_fingerprint = Some(model.fingerprint()?);
    Ok(report)
}
