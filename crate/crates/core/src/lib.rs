//! Attention-based caption decoding for describing network units from their
//! exemplar feature states.
//!
//! The pipeline: source feature states ([`attention::SourceStates`]) are
//! attended over by an LSTM decoder ([`decoder`]) using one of four
//! mechanisms ([`Mechanism`]); captions are decoded greedily or by beam
//! search, optionally reranked by PMI against an n-gram prior ([`pmi`]), and
//! scored with corpus BLEU and embedding-matching F1 ([`metrics`]).

pub mod attention;
pub mod data;
pub mod decoder;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pmi;
pub mod report;
pub mod trainer;

pub use attention::{Mechanism, SourceStates};
pub use data::{CaptionRecord, DatasetRecord, SynthSpec, Vocabulary};
pub use decoder::{DecoderDims, DecoderParams, DecoderState, Hypothesis};
pub use error::{Error, Result};
pub use metrics::{BertScoreTriple, BleuBreakdown, EmbedderKind, EmbeddingProvider};
pub use model::{load_model, save_model, Model};
pub use numerics::Matrix;
pub use pmi::{NgramLM, ScoredCandidate};
pub use report::ReportRow;
pub use trainer::{EvalReport, TrainConfig, TrainHistory};
