//! A trained captioner and its on-disk checkpoint format.
//!
//! Byte layout, all integers little-endian:
//!
//! ```text
//! 8 bytes   magic "NCAPCKPT"
//! 4 bytes   u32 header length H
//! H bytes   UTF-8 JSON header (version, mechanism, max_len, dims, vocabulary, tensor list)
//! 8 bytes   u64 value count N
//! 8N bytes  f64 values, tensors concatenated row-major in header order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attention::{Mechanism, SourceStates};
use crate::data::Vocabulary;
use crate::decoder::{beam_decode, greedy_decode, DecoderDims, DecoderParams, Hypothesis};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NCAPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub mechanism: Mechanism,
    pub vocab: Vocabulary,
    /// Padded caption length (`BOS` + body + `EOS`).
    pub max_len: usize,
    pub params: DecoderParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    mechanism: Mechanism,
    max_len: usize,
    dims: DecoderDims,
    vocab: Vocabulary,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

impl Model {
    /// Upper bound on emitted tokens when decoding (body plus `EOS`).
    pub fn decode_len(&self) -> usize {
        self.max_len - 1
    }

    pub fn greedy(&self, src: &SourceStates) -> Result<Vec<usize>> {
        greedy_decode(src, &self.params, self.mechanism, self.decode_len())
    }

    pub fn beam(&self, src: &SourceStates, width: usize) -> Result<Vec<Hypothesis>> {
        beam_decode(src, &self.params, self.mechanism, width, self.decode_len())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let named = self.params.named();
        let header = Header {
            version: CHECKPOINT_VERSION,
            mechanism: self.mechanism,
            max_len: self.max_len,
            dims: self.params.dims,
            vocab: self.vocab.clone(),
            tensors: named
                .iter()
                .map(|(name, m)| TensorEntry {
                    name: name.to_string(),
                    rows: m.rows(),
                    cols: m.cols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let count: usize = named.iter().map(|(_, m)| m.len()).sum();
        let mut out = Vec::with_capacity(8 + 4 + json.len() + 8 + 8 * count);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(count as u64).to_le_bytes());
        for (_, m) in named {
            for x in m.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let h_len = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes")) as usize;
        let header: Header = serde_json::from_slice(r.take(h_len)?)
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {} (this build reads {CHECKPOINT_VERSION})",
                header.version
            )));
        }
        header
            .dims
            .validate()
            .map_err(|e| Error::Format(format!("checkpoint dims: {e}")))?;
        if header.vocab.len() != header.dims.vocab_size {
            return Err(Error::Format(format!(
                "vocabulary has {} tokens but dims say {}",
                header.vocab.len(),
                header.dims.vocab_size
            )));
        }
        if header.max_len < 3 {
            return Err(Error::Format(format!(
                "max_len {} is below 3",
                header.max_len
            )));
        }
        let count = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;

        let mut params = DecoderParams::zeros(header.dims);
        let expected: usize = params.num_values();
        if count != expected || header.tensors.len() != params.named().len() {
            return Err(Error::Format(format!(
                "checkpoint holds {count} values, dims need {expected}"
            )));
        }
        for ((name, m), entry) in params.named_mut().into_iter().zip(&header.tensors) {
            if entry.name != name || (entry.rows, entry.cols) != m.shape() {
                return Err(Error::Format(format!(
                    "tensor `{}` {}x{} does not match expected `{name}` {}x{}",
                    entry.name,
                    entry.rows,
                    entry.cols,
                    m.rows(),
                    m.cols()
                )));
            }
            for x in m.data_mut() {
                *x = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            }
            if !m.is_finite() {
                return Err(Error::Format(format!(
                    "tensor `{name}` holds non-finite values"
                )));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            mechanism: header.mechanism,
            vocab: header.vocab,
            max_len: header.max_len,
            params,
        })
    }

    /// Hex SHA-256 of the checkpoint bytes.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!(
                "checkpoint truncated: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))),
        }
    }
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_bytes()?).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint; with `expect` set, a different stored mechanism is an
/// error rather than silently decoding with the wrong attention.
pub fn load_model(path: impl AsRef<Path>, expect: Option<Mechanism>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let model = Model::from_bytes(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    if let Some(want) = expect {
        if want != model.mechanism {
            return Err(Error::MechanismMismatch {
                expected: want.name().to_string(),
                found: model.mechanism.name().to_string(),
            });
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::numerics::Matrix;

    fn matrix_bits(m: &Matrix) -> Vec<u64> {
        m.data().iter().map(|x| x.to_bits()).collect()
    }

    fn model(mechanism: Mechanism) -> Model {
        let vocab = Vocabulary::build(&["red round things", "blue sky"], 1).unwrap();
        let dims = DecoderDims {
            vocab_size: vocab.len(),
            d_e: 3,
            d_h: 4,
            d_s: 2,
            d_a: 3,
            d_k: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        Model {
            mechanism,
            vocab,
            max_len: 6,
            params: DecoderParams::random(dims, &mut rng, 0.08),
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let m = model(Mechanism::Multi);
        let back = Model::from_bytes(&m.to_bytes().unwrap()).unwrap();
        for ((_, a), (_, b)) in m.params.named().iter().zip(back.params.named().iter()) {
            assert_eq!(matrix_bits(a), matrix_bits(b));
        }
        assert_eq!(back, m);
    }

    #[test]
    fn truncation_is_format_error() {
        let bytes = model(Mechanism::Luong).to_bytes().unwrap();
        for cut in [0, 5, 10, 40, bytes.len() - 1] {
            assert!(
                matches!(Model::from_bytes(&bytes[..cut]), Err(Error::Format(_))),
                "cut {cut}"
            );
        }
    }

    #[test]
    fn mechanism_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_model(&model(Mechanism::Bahdanau), &p).unwrap();
        let err = load_model(&p, Some(Mechanism::Multi)).unwrap_err();
        assert!(matches!(err, Error::MechanismMismatch { .. }), "{err}");
        assert!(load_model(&p, Some(Mechanism::Bahdanau)).is_ok());
    }
}
