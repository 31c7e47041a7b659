//! Synthetic captioning datasets with controllable size and caption-length
//! statistics.
//!
//! Each record belongs to a latent topic. Its mean feature vector `m` is the
//! topic center plus a small jitter, and its `S` grid positions scatter
//! around `m` with zero-mean offsets. A fixed random linear map `m -> z`
//! scores every word; the caption lists the words with `z > threshold` in
//! descending score order. One global threshold is tuned so the mean caption
//! length hits the requested value. Captions are therefore a deterministic
//! function of the features, which makes the task learnable.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::DatasetRecord;
use crate::attention::SourceStates;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

const LEXICON: &[&str] = &[
    "objects",
    "and",
    "the",
    "of",
    "colored",
    "white",
    "or",
    "with",
    "lines",
    "black",
    "a",
    "in",
    "on",
    "people",
    "space",
    "items",
    "merchandise",
    "store",
    "areas",
    "pink",
    "purple",
    "fluorescent",
    "roofs",
    "pizza",
    "towers",
    "mountains",
    "windows",
    "buildings",
    "tops",
    "chairs",
    "table",
    "shirt",
    "wall",
    "decoration",
    "bridge",
    "brick",
    "tower",
    "faces",
    "sky",
    "water",
    "grass",
    "trees",
    "road",
    "cars",
    "text",
    "red",
    "blue",
    "green",
    "yellow",
    "orange",
    "brown",
    "gray",
    "dark",
    "bright",
    "stripes",
    "dots",
    "edges",
    "corners",
    "circles",
    "curves",
    "patterns",
    "animals",
    "dogs",
    "birds",
    "food",
    "plates",
    "floor",
    "ceiling",
    "lights",
    "signs",
    "shelves",
    "boxes",
    "clothing",
    "hands",
    "heads",
    "legs",
    "metal",
    "wood",
    "glass",
    "fabric",
    "texture",
];

/// Parameters of a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Number of distinct caption words.
    pub vocab_size: usize,
    pub num_records: usize,
    /// Longest caption in words; exactly one record reaches it.
    pub max_len: usize,
    /// Target mean caption length in words.
    pub mean_len: f64,
    /// Positions `S` in each feature grid.
    #[serde(default = "default_grid_size")]
    pub feature_grid_size: usize,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default)]
    pub seed: u64,
    /// Latent topics; records of one topic share (nearly) the same caption.
    #[serde(default)]
    pub num_topics: Option<usize>,
    #[serde(default = "default_topic_jitter")]
    pub topic_jitter: f64,
    #[serde(default = "default_position_spread")]
    pub position_spread: f64,
    /// Prefix for generated unit ids.
    #[serde(default)]
    pub unit_prefix: Option<String>,
}

fn default_grid_size() -> usize {
    9
}

fn default_feature_dim() -> usize {
    16
}

fn default_topic_jitter() -> f64 {
    0.02
}

fn default_position_spread() -> f64 {
    0.3
}

impl SynthSpec {
    pub fn new(
        vocab_size: usize,
        num_records: usize,
        max_len: usize,
        mean_len: f64,
        seed: u64,
    ) -> Self {
        Self {
            vocab_size,
            num_records,
            max_len,
            mean_len,
            feature_grid_size: default_grid_size(),
            feature_dim: default_feature_dim(),
            seed,
            num_topics: None,
            topic_jitter: default_topic_jitter(),
            position_spread: default_position_spread(),
            unit_prefix: None,
        }
    }

    /// Record counts and caption lengths of the three annotation subsets.
    pub fn preset(name: &str, seed: u64) -> Result<Vec<SynthSpec>> {
        let one = |n, max_len, mean, offset: u64, prefix: &str| {
            let mut s = SynthSpec::new(120, n, max_len, mean, seed.wrapping_add(offset));
            s.unit_prefix = Some(prefix.to_string());
            s
        };
        match name {
            "alexnet" => Ok(vec![one(1376, 21, 4.0, 0, "alexnet")]),
            "resnet152" => Ok(vec![one(3904, 47, 5.0, 0, "resnet152")]),
            "biggan" => Ok(vec![one(4992, 39, 4.0, 0, "biggan")]),
            "compound" => Ok(vec![
                one(3904, 47, 5.0, 1, "resnet152"),
                one(1376, 21, 4.0, 2, "alexnet"),
                one(4992, 39, 4.0, 3, "biggan"),
            ]),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected alexnet | resnet152 | biggan | compound)"
            ))),
        }
    }

    pub fn topics(&self) -> usize {
        self.num_topics
            .unwrap_or((self.num_records / 8).clamp(1, 256))
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_len < 3 || self.max_len > self.vocab_size {
            return Err(Error::Config(format!(
                "max_len must lie in [3, vocab_size = {}], got {}",
                self.vocab_size, self.max_len
            )));
        }
        if !(3.0..=self.max_len as f64).contains(&self.mean_len) {
            return Err(Error::Config(format!(
                "mean_len {} must lie in [3, max_len = {}]",
                self.mean_len, self.max_len
            )));
        }
        if self.vocab_size == 0
            || self.num_records == 0
            || self.feature_grid_size == 0
            || self.feature_dim == 0
        {
            return Err(Error::Config(format!(
                "synthetic spec sizes must be positive: {self:?}"
            )));
        }
        if self.topics() == 0 {
            return Err(Error::Config("num_topics must be positive".into()));
        }
        Ok(())
    }
}

/// Caption words for a vocabulary of `n`: the built-in lexicon, then `w<i>`.
pub fn lexicon(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match LEXICON.get(i) {
            Some(w) => (*w).to_string(),
            None => format!("w{i}"),
        })
        .collect()
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            x * scale
        })
        .collect()
}

fn caption_length(scores: &[f64], threshold: f64, cap: usize) -> usize {
    scores
        .iter()
        .filter(|z| **z > threshold)
        .count()
        .clamp(1, cap)
}

pub fn synth_generate(spec: &SynthSpec) -> Result<Vec<DatasetRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (d, v) = (spec.feature_dim, spec.vocab_size);
    let words = lexicon(v);

    let map = Matrix::from_vec(d, v, normal_vec(&mut rng, d * v, 1.0 / (d as f64).sqrt()))?;
    let centers: Vec<Vec<f64>> = (0..spec.topics())
        .map(|_| normal_vec(&mut rng, d, 1.0))
        .collect();

    let mut grids = Vec::with_capacity(spec.num_records);
    let mut scores = Vec::with_capacity(spec.num_records);
    for _ in 0..spec.num_records {
        let topic = rng.random_range(0..centers.len());
        let jitter = normal_vec(&mut rng, d, spec.topic_jitter);
        let mean: Vec<f64> = centers[topic]
            .iter()
            .zip(&jitter)
            .map(|(c, j)| c + j)
            .collect();

        let s = spec.feature_grid_size;
        let offsets = Matrix::from_vec(s, d, normal_vec(&mut rng, s * d, spec.position_spread))?;
        let centered = offsets.mean_rows();
        let grid = Matrix::from_fn(s, d, |r, c| {
            mean[c] + offsets.get(r, c) - centered.get(0, c)
        });

        let m = Matrix::row_vector(mean)?;
        scores.push(m.matmul(&map)?.into_vec());
        grids.push(grid);
    }

    let cap = spec.max_len;
    let mean_len = |t: f64| {
        scores
            .iter()
            .map(|z| caption_length(z, t, cap))
            .sum::<usize>() as f64
            / scores.len() as f64
    };
    let (mut lo, mut hi) = scores
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), z| {
            (a.min(*z), b.max(*z))
        });
    lo -= 1.0;
    // mean_len(lo) is the longest achievable, mean_len(hi) the shortest.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_len(mid) >= spec.mean_len {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let threshold = if (mean_len(lo) - spec.mean_len).abs() <= (mean_len(hi) - spec.mean_len).abs()
    {
        lo
    } else {
        hi
    };

    let mut lengths: Vec<usize> = scores
        .iter()
        .map(|z| caption_length(z, threshold, cap))
        .collect();
    // The longest caption is pinned to `max_len` so the realized maximum
    // matches the spec exactly.
    let longest = (0..lengths.len())
        .max_by(|a, b| lengths[*a].cmp(&lengths[*b]).then(b.cmp(a)))
        .expect("at least one record");
    lengths[longest] = cap;

    let prefix = spec.unit_prefix.as_deref().unwrap_or("unit");
    let width = spec.num_records.to_string().len();
    grids
        .into_iter()
        .zip(&scores)
        .enumerate()
        .map(|(i, (grid, z))| {
            let mut order: Vec<usize> = (0..v).collect();
            order.sort_by(|a, b| z[*b].total_cmp(&z[*a]).then(a.cmp(b)));
            let len = lengths[i];
            let caption = order[..len]
                .iter()
                .map(|&w| words[w].as_str())
                .collect::<Vec<_>>()
                .join(" ");
            Ok(DatasetRecord {
                unit_id: format!("{prefix}-{i:0width$}"),
                features: SourceStates::new(grid)?,
                captions: vec![caption],
            })
        })
        .collect()
}

/// Summary statistics in the layout of the annotation-subset table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub captions: usize,
    pub longest: usize,
    pub average: f64,
    pub mode_length: usize,
    pub mode_occurrences: usize,
    pub top_tokens: Vec<(String, u64)>,
}

pub fn dataset_stats(records: &[DatasetRecord]) -> DatasetStats {
    let lengths: Vec<usize> = records
        .iter()
        .flat_map(|r| r.captions.iter())
        .map(|c| c.split_whitespace().count())
        .collect();
    let mut by_len: BTreeMap<usize, usize> = BTreeMap::new();
    for l in &lengths {
        *by_len.entry(*l).or_default() += 1;
    }
    let (mode_length, mode_occurrences) =
        by_len.iter().fold(
            (0, 0),
            |best, (l, n)| if *n > best.1 { (*l, *n) } else { best },
        );

    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for r in records {
        for c in &r.captions {
            for t in super::vocab::tokenize(c) {
                *counts.entry(t).or_default() += 1;
            }
        }
    }
    let mut top: Vec<(String, u64)> = counts.into_iter().collect();
    top.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    top.truncate(10);

    DatasetStats {
        records: records.len(),
        captions: lengths.len(),
        longest: lengths.iter().copied().max().unwrap_or(0),
        average: if lengths.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
        },
        mode_length,
        mode_occurrences,
        top_tokens: top,
    }
}
