//! Teacher-forced SGD training with best-validation-BLEU snapshots.

mod eval;

pub use eval::{evaluate, evaluate_candidates, DecodeOptions, EvalReport};

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::Mechanism;
use crate::data::{required_max_len, DatasetRecord, EncodedDataset, SplitRatios, Vocabulary};
use crate::decoder::{caption_loss_and_grad, DecoderDims, DecoderParams};
use crate::error::{Error, Result};
use crate::metrics::EmbedderKind;
use crate::model::Model;
use crate::numerics::Matrix;

/// Everything that determines a training run. Unknown keys are rejected when
/// read from JSON; missing keys take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mechanism: Mechanism,
    pub d_h: usize,
    pub d_e: usize,
    pub d_a: usize,
    pub d_k: usize,
    /// Width of the seeded-random metric embeddings.
    pub d_emb: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub beam: usize,
    /// Validate every this many epochs (the last epoch is always validated).
    pub eval_every: usize,
    pub clip_norm: f64,
    pub init_scale: f64,
    /// Padded caption length; derived from the data when absent.
    pub max_len: Option<usize>,
    pub min_count: u64,
    pub split: SplitRatios,
    pub embedder: EmbedderKind,
    pub lm_order: usize,
    pub lm_add_k: f64,
    pub pmi_lambda: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mechanism: Mechanism::Bahdanau,
            d_h: 64,
            d_e: 32,
            d_a: 64,
            d_k: 32,
            d_emb: 64,
            batch_size: 16,
            learning_rate: 1.0,
            epochs: 30,
            seed: 0,
            beam: 5,
            eval_every: 1,
            clip_norm: 5.0,
            init_scale: 0.08,
            max_len: None,
            min_count: 1,
            split: SplitRatios::default(),
            embedder: EmbedderKind::OneHot,
            lm_order: 3,
            lm_add_k: 0.1,
            pmi_lambda: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("d_h", self.d_h),
            ("d_e", self.d_e),
            ("d_a", self.d_a),
            ("d_k", self.d_k),
            ("d_emb", self.d_emb),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("beam", self.beam),
            ("eval_every", self.eval_every),
            ("lm_order", self.lm_order),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::Config(format!("`{name}` must be positive")));
            }
        }
        let rates = [
            ("learning_rate", self.learning_rate),
            ("clip_norm", self.clip_norm),
            ("init_scale", self.init_scale),
            ("lm_add_k", self.lm_add_k),
        ];
        for (name, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "`{name}` must be positive and finite, got {v}"
                )));
            }
        }
        if !self.pmi_lambda.is_finite() {
            return Err(Error::Config("`pmi_lambda` must be finite".into()));
        }
        if let Some(l) = self.max_len {
            if l < 3 {
                return Err(Error::Config(format!(
                    "`max_len` must be at least 3, got {l}"
                )));
            }
        }
        self.split.validate()
    }

    pub fn dims(&self, vocab_size: usize, d_s: usize) -> DecoderDims {
        DecoderDims {
            vocab_size,
            d_e: self.d_e,
            d_h: self.d_h,
            d_s,
            d_a: self.d_a,
            d_k: self.d_k,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-caption training loss over the epoch.
    pub loss: f64,
    pub bleu: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean loss of the freshly initialized model on the training captions.
    pub initial_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the highest validation BLEU (earliest on ties).
    pub best: Option<usize>,
}

impl TrainHistory {
    pub fn best_record(&self) -> Option<&EpochRecord> {
        self.best.map(|i| &self.epochs[i])
    }

    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// Columns `epoch,loss,bleu,f1`; unvalidated epochs leave the metric
    /// cells empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "loss", "bleu", "f1"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.loss.to_string(),
                opt(e.bleu),
                opt(e.f1),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv()?.as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

pub struct TrainOutcome {
    pub final_model: Model,
    pub best_model: Model,
    pub history: TrainHistory,
}

/// Builds the vocabulary from the training captions.
pub fn build_vocab(config: &TrainConfig, train: &[DatasetRecord]) -> Result<Vocabulary> {
    let corpus: Vec<&str> = train
        .iter()
        .flat_map(|r| r.captions.iter().map(String::as_str))
        .collect();
    Vocabulary::build(&corpus, config.min_count)
}

fn l2_sq(grads: &[Matrix]) -> f64 {
    grads.iter().map(Matrix::norm_sq).sum()
}

/// Sum of per-example gradients in example order, so results do not depend
/// on how rayon schedules the work.
fn batch_gradient(
    params: &DecoderParams,
    mechanism: Mechanism,
    data: &EncodedDataset,
    batch: &[(usize, usize)],
) -> Result<(Vec<f64>, Vec<Matrix>)> {
    let per: Vec<(f64, Vec<Matrix>)> = batch
        .par_iter()
        .map(|&(r, c)| {
            let rec = &data.records[r];
            caption_loss_and_grad(params, mechanism, &rec.features, &rec.captions[c])
        })
        .collect::<Result<_>>()?;
    let mut losses = Vec::with_capacity(per.len());
    let mut total: Option<Vec<Matrix>> = None;
    for (loss, g) in per {
        losses.push(loss);
        match total.as_mut() {
            None => total = Some(g),
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    a.axpy(1.0, b)?;
                }
            }
        }
    }
    Ok((losses, total.unwrap_or_default()))
}

fn mean_loss(params: &DecoderParams, mechanism: Mechanism, data: &EncodedDataset) -> Result<f64> {
    let losses: Vec<f64> = data
        .records
        .par_iter()
        .flat_map_iter(|r| r.captions.iter().map(move |c| (r, c)))
        .map(|(r, c)| caption_loss_and_grad(params, mechanism, &r.features, c).map(|(l, _)| l))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Runs SGD for `config.epochs` epochs. Validation is greedy decoding scored
/// with corpus BLEU and mean F1 under `config.embedder`.
pub fn train(
    config: &TrainConfig,
    train_set: &[DatasetRecord],
    val_set: &[DatasetRecord],
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Domain(format!(
            "training needs nonempty splits (train {}, val {})",
            train_set.len(),
            val_set.len()
        )));
    }
    let d_s = train_set[0].features.dim();
    if let Some(bad) = train_set
        .iter()
        .chain(val_set)
        .find(|r| r.features.dim() != d_s)
    {
        return Err(Error::Config(format!(
            "unit `{}` has feature width {}, expected {d_s}",
            bad.unit_id,
            bad.features.dim()
        )));
    }

    let vocab = build_vocab(config, train_set)?;
    let max_len = config
        .max_len
        .unwrap_or_else(|| required_max_len(train_set).max(required_max_len(val_set)));
    let data = EncodedDataset::encode(train_set, &vocab, max_len)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dims = config.dims(vocab.len(), d_s);
    dims.validate()?;
    let mut model = Model {
        mechanism: config.mechanism,
        vocab,
        max_len,
        params: DecoderParams::random(dims, &mut rng, config.init_scale),
    };

    let train_corpus: Vec<Vec<usize>> = data
        .records
        .iter()
        .flat_map(|r| r.captions.iter().map(|c| c.body().to_vec()))
        .collect();
    let provider =
        config
            .embedder
            .build(model.vocab.len(), &train_corpus, config.d_emb, config.seed)?;
    let val_opts = DecodeOptions::greedy();

    let mut examples: Vec<(usize, usize)> = data
        .records
        .iter()
        .enumerate()
        .flat_map(|(r, rec)| (0..rec.captions.len()).map(move |c| (r, c)))
        .collect();

    let mut history = TrainHistory {
        initial_loss: mean_loss(&model.params, model.mechanism, &data)?,
        ..Default::default()
    };
    let mut best_model = model.clone();
    let mut best_bleu = f64::NEG_INFINITY;

    for epoch in 1..=config.epochs {
        examples.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (step, batch) in examples.chunks(config.batch_size).enumerate() {
            let (losses, mut grads) = batch_gradient(&model.params, model.mechanism, &data, batch)?;
            let batch_loss: f64 = losses.iter().sum();
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, step {}",
                    step + 1
                )));
            }
            loss_sum += batch_loss;

            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| *g = g.scale(scale));
            let norm = l2_sq(&grads).sqrt();
            if !norm.is_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient norm at epoch {epoch}, step {}",
                    step + 1
                )));
            }
            let clip = if norm > config.clip_norm {
                config.clip_norm / norm
            } else {
                1.0
            };
            for ((_, p), g) in model.params.named_mut().into_iter().zip(&grads) {
                p.axpy(-config.learning_rate * clip, g)?;
            }
            model.params.embedding.row_mut(crate::data::PAD).fill(0.0);
        }
        let mut record = EpochRecord {
            epoch,
            loss: loss_sum / examples.len() as f64,
            bleu: None,
            f1: None,
        };
        if epoch % config.eval_every == 0 || epoch == config.epochs {
            let report = evaluate(&model, val_set, provider.as_ref(), &val_opts)?;
            record.bleu = Some(report.bleu.score);
            record.f1 = Some(report.f1);
            if report.bleu.score > best_bleu {
                best_bleu = report.bleu.score;
                best_model = model.clone();
                history.best = Some(history.epochs.len());
            }
        }
        history.epochs.push(record);
    }
    Ok(TrainOutcome {
        final_model: model,
        best_model,
        history,
    })
}
