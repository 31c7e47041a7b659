use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::vocab::{encode, CaptionRecord, Vocabulary};
use crate::attention::SourceStates;
use crate::error::{Error, Result};

/// One unit (neuron) with its exemplar features and annotations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub unit_id: String,
    pub features: SourceStates,
    pub captions: Vec<String>,
}

/// Reads a JSON-Lines dataset. Blank lines are skipped; feature width must
/// be uniform across the file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let rec: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if rec.captions.is_empty() {
            return Err(parse_err(format!("unit `{}` has no captions", rec.unit_id)));
        }
        match dim {
            None => dim = Some(rec.features.dim()),
            Some(d) if d != rec.features.dim() => {
                return Err(parse_err(format!(
                    "feature width {} differs from {d} on earlier lines",
                    rec.features.dim()
                )))
            }
            Some(_) => {}
        }
        records.push(rec);
    }
    Ok(records)
}

/// Concatenates several dataset files in order.
pub fn load_datasets<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<DatasetRecord>> {
    let mut all: Vec<DatasetRecord> = Vec::new();
    for p in paths {
        let part = load_dataset(p)?;
        if let (Some(a), Some(b)) = (all.first(), part.first()) {
            if a.features.dim() != b.features.dim() {
                return Err(Error::Shape {
                    op: "load_datasets",
                    left: (a.features.len(), a.features.dim()),
                    right: (b.features.len(), b.features.dim()),
                });
            }
        }
        all.extend(part);
    }
    Ok(all)
}

pub fn write_dataset(records: &[DatasetRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// SHA-256 over the canonical JSON-Lines serialization.
pub fn fingerprint(records: &[DatasetRecord]) -> Result<String> {
    let mut h = Sha256::new();
    for r in records {
        h.update(serde_json::to_vec(r)?);
        h.update(b"\n");
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config(format!(
                "split ratios must lie in [0, 1]: {self:?}"
            )));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios sum to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle followed by partitioning. Validation and test sizes are
/// floored; the remainder goes to training.
pub fn split<T: Clone>(records: &[T], ratios: SplitRatios, seed: u64) -> Result<Split<T>> {
    ratios.validate()?;
    let n = records.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (n as f64 * ratios.val).floor() as usize;
    let n_test = (n as f64 * ratios.test).floor() as usize;
    let n_train = n - n_val - n_test;
    let pick = |ix: &[usize]| ix.iter().map(|&i| records[i].clone()).collect();
    Ok(Split {
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

/// A record with its captions encoded against a vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedRecord {
    pub unit_id: String,
    pub features: SourceStates,
    pub captions: Vec<CaptionRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedDataset {
    pub records: Vec<EncodedRecord>,
    pub max_len: usize,
}

impl EncodedDataset {
    pub fn encode(records: &[DatasetRecord], vocab: &Vocabulary, max_len: usize) -> Result<Self> {
        let records = records
            .iter()
            .map(|r| {
                Ok(EncodedRecord {
                    unit_id: r.unit_id.clone(),
                    features: r.features.clone(),
                    captions: r
                        .captions
                        .iter()
                        .map(|c| encode(c, vocab, max_len))
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { records, max_len })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.records.first().map(|r| r.features.dim())
    }
}

/// Padded length implied by the longest caption (`BOS` + words + `EOS`).
pub fn required_max_len(records: &[DatasetRecord]) -> usize {
    records
        .iter()
        .flat_map(|r| r.captions.iter())
        .map(|c| c.split_whitespace().count() + 2)
        .max()
        .unwrap_or(3)
        .max(3)
}
