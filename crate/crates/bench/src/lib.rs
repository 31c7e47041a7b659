//! Fixtures shared by the criterion benches.

use neurocap_core::decoder::{DecoderDims, DecoderParams};
use neurocap_core::{Matrix, SourceStates};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_source(rng: &mut impl Rng, positions: usize, dim: usize) -> SourceStates {
    SourceStates::new(random_matrix(rng, positions, dim)).expect("non-empty grid")
}

/// Decoder sized like the defaults of the trainer, over a 9-position grid.
pub fn default_dims(vocab_size: usize) -> DecoderDims {
    DecoderDims {
        vocab_size,
        d_e: 32,
        d_h: 64,
        d_s: 16,
        d_a: 64,
        d_k: 32,
    }
}

pub fn random_decoder(rng: &mut impl Rng, dims: DecoderDims) -> DecoderParams {
    DecoderParams::random(dims, rng, 0.3)
}
