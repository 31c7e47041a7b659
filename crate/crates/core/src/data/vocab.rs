use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

pub fn is_special(id: usize) -> bool {
    id == PAD || id == BOS || id == EOS
}

/// Lowercased whitespace tokenization.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Token <-> id map with four reserved ids (`PAD`, `BOS`, `EOS`, `UNK`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        let index = r
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            tokens: r.tokens,
            counts: r.counts,
            index,
        }
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        Self {
            tokens: v.tokens,
            counts: v.counts,
        }
    }
}

impl Vocabulary {
    /// Tokens seen at least `min_count` times get ids `4..`, ordered by
    /// descending count then lexically.
    pub fn build<S: AsRef<str>>(corpus: &[S], min_count: u64) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Domain(
                "cannot build a vocabulary from an empty corpus".into(),
            ));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for text in corpus {
            for tok in tokenize(text.as_ref()) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count.max(1) && !RESERVED.contains(&t.as_str()))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut cs = vec![0; RESERVED.len()];
        for (t, c) in kept {
            tokens.push(t);
            cs.push(c);
        }
        Ok(VocabRepr { tokens, counts: cs }.into())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or `UNK`.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Corpus count of the token with this id (0 for reserved ids).
    pub fn count(&self, id: usize) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    /// The `k` most frequent non-reserved tokens with their counts.
    pub fn most_frequent(&self, k: usize) -> Vec<(&str, u64)> {
        self.tokens[RESERVED.len()..]
            .iter()
            .zip(&self.counts[RESERVED.len()..])
            .take(k)
            .map(|(t, c)| (t.as_str(), *c))
            .collect()
    }

    /// Renders ids as text, skipping `BOS`/`PAD` and stopping at `EOS`.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .copied()
            .take_while(|&id| id != EOS)
            .filter(|&id| id != BOS && id != PAD)
            .map(|id| self.token(id).unwrap_or(RESERVED[UNK]))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A caption as a fixed-length id sequence: `BOS body EOS PAD...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub text: String,
    pub ids: Vec<usize>,
    /// True up to and including the `EOS` position.
    pub mask: Vec<bool>,
}

impl CaptionRecord {
    /// Index of the `EOS` token.
    pub fn eos_position(&self) -> usize {
        self.mask.iter().take_while(|m| **m).count() - 1
    }

    /// Body ids between `BOS` and `EOS`.
    pub fn body(&self) -> &[usize] {
        &self.ids[1..self.eos_position()]
    }
}

/// Lowercases, tokenizes, wraps in `BOS`/`EOS` (truncating the body to
/// `max_len - 2` tokens) and pads to exactly `max_len`.
pub fn encode(text: &str, vocab: &Vocabulary, max_len: usize) -> Result<CaptionRecord> {
    if max_len < 3 {
        return Err(Error::Config(format!(
            "max_len must be at least 3, got {max_len}"
        )));
    }
    let mut ids = Vec::with_capacity(max_len);
    ids.push(BOS);
    ids.extend(tokenize(text).iter().take(max_len - 2).map(|t| vocab.id(t)));
    ids.push(EOS);
    let real = ids.len();
    ids.resize(max_len, PAD);
    let mask = (0..max_len).map(|i| i < real).collect();
    Ok(CaptionRecord {
        text: text.to_string(),
        ids,
        mask,
    })
}
