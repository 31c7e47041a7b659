//! Vocabulary, fixed-length caption encoding, dataset files, splitting and
//! synthetic data generation.

mod dataset;
mod synth;
mod vocab;

pub use dataset::{
    fingerprint, load_dataset, load_datasets, required_max_len, split, write_dataset,
    DatasetRecord, EncodedDataset, EncodedRecord, Split, SplitRatios,
};
pub use synth::{dataset_stats, lexicon, synth_generate, DatasetStats, SynthSpec};
pub use vocab::{encode, is_special, tokenize, CaptionRecord, Vocabulary, BOS, EOS, PAD, UNK};
