use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic map from token id to a unit-norm vector.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn vocab_size(&self) -> usize;
    fn embed(&self, id: usize) -> Result<&[f64]>;
    fn name(&self) -> &'static str;
}

/// Row-per-token table shared by the built-in providers.
#[derive(Clone, Debug)]
struct Table {
    dim: usize,
    data: Vec<f64>,
}

impl Table {
    fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for mut r in rows {
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            r.iter_mut().for_each(|x| *x /= norm);
            data.extend(r);
        }
        Self { dim, data }
    }

    fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    fn row(&self, id: usize) -> Result<&[f64]> {
        if id >= self.len() {
            return Err(Error::Index {
                what: "embedding table",
                index: id,
                len: self.len(),
            });
        }
        Ok(&self.data[id * self.dim..(id + 1) * self.dim])
    }
}

macro_rules! table_provider {
    ($ty:ident, $name:literal) => {
        impl EmbeddingProvider for $ty {
            fn dim(&self) -> usize {
                self.0.dim
            }
            fn vocab_size(&self) -> usize {
                self.0.len()
            }
            fn embed(&self, id: usize) -> Result<&[f64]> {
                self.0.row(id)
            }
            fn name(&self) -> &'static str {
                $name
            }
        }
    };
}

/// `e_i` for token `i`: similarity is exact match.
#[derive(Clone, Debug)]
pub struct OneHot(Table);

impl OneHot {
    pub fn new(vocab_size: usize) -> Self {
        let rows = (0..vocab_size)
            .map(|i| {
                (0..vocab_size)
                    .map(|j| if i == j { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        Self(Table::from_rows(rows))
    }
}

/// Gaussian directions normalized to the unit sphere.
#[derive(Clone, Debug)]
pub struct SeededRandom(Table);

impl SeededRandom {
    pub fn new(vocab_size: usize, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..vocab_size)
            .map(|_| loop {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                if v.iter().any(|x: &f64| *x != 0.0) {
                    break v;
                }
            })
            .collect();
        Ok(Self(Table::from_rows(rows)))
    }
}

/// Each token is its row of windowed co-occurrence counts over a caption
/// corpus, plus one on the diagonal so unseen tokens keep a direction.
#[derive(Clone, Debug)]
pub struct Cooccurrence(Table);

impl Cooccurrence {
    pub fn new<S: AsRef<[usize]>>(corpus: &[S], vocab_size: usize, window: usize) -> Result<Self> {
        let mut counts = vec![vec![0.0; vocab_size]; vocab_size];
        for (i, row) in counts.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for seq in corpus {
            let seq = seq.as_ref();
            for (i, &a) in seq.iter().enumerate() {
                if a >= vocab_size {
                    return Err(Error::Index {
                        what: "co-occurrence corpus",
                        index: a,
                        len: vocab_size,
                    });
                }
                for &b in seq.iter().skip(i + 1).take(window) {
                    if b < vocab_size {
                        counts[a][b] += 1.0;
                        counts[b][a] += 1.0;
                    }
                }
            }
        }
        Ok(Self(Table::from_rows(counts)))
    }
}

table_provider!(OneHot, "onehot");
table_provider!(SeededRandom, "random");
table_provider!(Cooccurrence, "cooc");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EmbedderKind {
    #[default]
    OneHot,
    Random,
    Cooc,
}

impl EmbedderKind {
    pub fn name(self) -> &'static str {
        match self {
            EmbedderKind::OneHot => "onehot",
            EmbedderKind::Random => "random",
            EmbedderKind::Cooc => "cooc",
        }
    }

    /// `corpus` is only read by the co-occurrence provider, `dim` and `seed`
    /// only by the random one.
    pub fn build<S: AsRef<[usize]>>(
        self,
        vocab_size: usize,
        corpus: &[S],
        dim: usize,
        seed: u64,
    ) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self {
            EmbedderKind::OneHot => Box::new(OneHot::new(vocab_size)),
            EmbedderKind::Random => Box::new(SeededRandom::new(vocab_size, dim, seed)?),
            EmbedderKind::Cooc => Box::new(Cooccurrence::new(corpus, vocab_size, 2)?),
        })
    }
}

impl fmt::Display for EmbedderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmbedderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "onehot" => Ok(EmbedderKind::OneHot),
            "random" => Ok(EmbedderKind::Random),
            "cooc" => Ok(EmbedderKind::Cooc),
            other => Err(Error::Config(format!(
                "unknown embedder `{other}` (expected onehot, random or cooc)"
            ))),
        }
    }
}

impl TryFrom<String> for EmbedderKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EmbedderKind> for String {
    fn from(k: EmbedderKind) -> Self {
        k.name().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_unit(p: &dyn EmbeddingProvider) {
        for id in 0..p.vocab_size() {
            let n: f64 = p
                .embed(id)
                .unwrap()
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            assert!((n - 1.0).abs() < 1e-12, "{} id {id}: {n}", p.name());
        }
    }

    #[test]
    fn providers_are_unit_norm() {
        let corpus = vec![vec![4, 5, 6], vec![5, 6, 7]];
        for kind in [
            EmbedderKind::OneHot,
            EmbedderKind::Random,
            EmbedderKind::Cooc,
        ] {
            let p = kind.build(9, &corpus, 16, 3).unwrap();
            assert_eq!(p.vocab_size(), 9);
            assert_unit(p.as_ref());
        }
    }

    #[test]
    fn random_is_seeded() {
        let a = SeededRandom::new(5, 8, 11).unwrap();
        let b = SeededRandom::new(5, 8, 11).unwrap();
        let c = SeededRandom::new(5, 8, 12).unwrap();
        assert_eq!(a.embed(3).unwrap(), b.embed(3).unwrap());
        assert_ne!(a.embed(3).unwrap(), c.embed(3).unwrap());
    }

    #[test]
    fn out_of_range_id() {
        assert!(matches!(OneHot::new(4).embed(4), Err(Error::Index { .. })));
    }

    #[test]
    fn names_round_trip() {
        for kind in [
            EmbedderKind::OneHot,
            EmbedderKind::Random,
            EmbedderKind::Cooc,
        ] {
            assert_eq!(kind.name().parse::<EmbedderKind>().unwrap(), kind);
        }
        assert!(matches!(
            "bert".parse::<EmbedderKind>(),
            Err(Error::Config(_))
        ));
    }
}
