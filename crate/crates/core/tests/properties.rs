use neurocap_core::attention::{Mechanism, SourceStates};
use neurocap_core::data::{split, SplitRatios};
use neurocap_core::decoder::{beam_decode, caption_loss_and_grad, DecoderDims, DecoderParams};
use neurocap_core::metrics::{bertscore, bleu, OneHot, SeededRandom};
use neurocap_core::numerics::softmax;
use neurocap_core::{CaptionRecord, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn caption() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(3usize..9, 0..10)
}

fn toy(seed: u64, vocab_size: usize) -> (DecoderParams, SourceStates) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = DecoderDims {
        vocab_size,
        d_e: 3,
        d_h: 4,
        d_s: 3,
        d_a: 4,
        d_k: 2,
    };
    let params = DecoderParams::random(dims, &mut rng, 1.5);
    let src = SourceStates::new(Matrix::from_fn(3, 3, |r, c| {
        ((r * 3 + c) as f64 * 0.7 + seed as f64).sin()
    }))
    .unwrap();
    (params, src)
}

proptest! {
    #[test]
    fn softmax_sums_to_one_and_ignores_shifts(
        v in prop::collection::vec(-50.0f64..50.0, 1..=64),
        shift in -100.0f64..100.0,
    ) {
        let p = softmax(&v).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let moved: Vec<f64> = v.iter().map(|x| x + shift).collect();
        let q = softmax(&moved).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn matmul_is_associative(
        (a, b, c) in (1usize..6, 1usize..6, 1usize..6, 1usize..6)
            .prop_flat_map(|(m, k, n, p)| (matrix(m, k), matrix(k, n), matrix(n, p)))
    ) {
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right).unwrap() <= 1e-9);
    }

    #[test]
    fn split_is_a_partition(n in 0usize..200, seed in any::<u64>(), val in 0.0f64..0.4, test in 0.0f64..0.4) {
        let ratios = SplitRatios { train: 1.0 - val - test, val, test };
        let items: Vec<usize> = (0..n).collect();
        let s = split(&items, ratios, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort();
        prop_assert_eq!(all, items);
    }

    #[test]
    fn bleu_ignores_corpus_order(
        pairs in prop::collection::vec((caption(), prop::collection::vec(caption(), 1..3)), 1..8),
        rot in 0usize..8,
    ) {
        let (cands, refs): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        let mut rotated = pairs.clone();
        let k = rot % rotated.len();
        rotated.rotate_left(k);
        rotated.reverse();
        let (c2, r2): (Vec<_>, Vec<_>) = rotated.into_iter().unzip();
        let a = bleu(&cands, &refs, 4).unwrap().score;
        let b = bleu(&c2, &r2, 4).unwrap().score;
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn bertscore_swaps_precision_and_recall(
        x in prop::collection::vec(3usize..9, 1..8),
        y in prop::collection::vec(3usize..9, 1..8),
        seed in any::<u64>(),
    ) {
        let random = SeededRandom::new(9, 8, seed).unwrap();
        let onehot = OneHot::new(9);
        for provider in [&random as &dyn neurocap_core::EmbeddingProvider, &onehot] {
            let xy = bertscore(&x, &y, provider).unwrap();
            let yx = bertscore(&y, &x, provider).unwrap();
            prop_assert!((xy.precision - yx.recall).abs() <= 1e-12);
            prop_assert!((xy.recall - yx.precision).abs() <= 1e-12);
            prop_assert!((xy.f1 - yx.f1).abs() <= 1e-12);
        }
    }

    /// Widening the beam is not monotone in general (see
    /// `wider_beam_can_score_lower`), but no width beats the exhaustive one.
    #[test]
    fn exhaustive_width_dominates_every_narrower_beam(seed in 0u64..500, width in 1usize..6) {
        let (params, src) = toy(seed, 5);
        let m = Mechanism::ALL[(seed % 4) as usize];
        let narrow = beam_decode(&src, &params, m, width, 3).unwrap();
        let full = beam_decode(&src, &params, m, 5usize.pow(3), 3).unwrap();
        prop_assert!(full[0].log_prob >= narrow[0].log_prob - 1e-12);
    }

    #[test]
    fn padding_tokens_do_not_reach_the_loss(seed in 0u64..200, junk in prop::collection::vec(0usize..6, 3)) {
        let (params, src) = toy(seed, 6);
        let clean = CaptionRecord {
            text: String::new(),
            ids: vec![1, 3, 4, 2, 0, 0, 0],
            mask: vec![true, true, true, true, false, false, false],
        };
        let mut dirty = clean.clone();
        dirty.ids[4..].copy_from_slice(&junk);
        let m = Mechanism::ALL[(seed % 4) as usize];
        let (l1, g1) = caption_loss_and_grad(&params, m, &src, &clean).unwrap();
        let (l2, g2) = caption_loss_and_grad(&params, m, &src, &dirty).unwrap();
        prop_assert_eq!(l1, l2);
        prop_assert_eq!(g1, g2);
    }
}

/// A fixed model where width 2 ends below width 1. Had the greedy path
/// survived in the wider beam it would be among the results, so the wider
/// beam must have pruned it for prefixes that looked better and finished
/// worse.
#[test]
fn wider_beam_can_score_lower() {
    let mut rng = ChaCha8Rng::seed_from_u64(893);
    let vocab_size = rng.random_range(4..9);
    let dims = DecoderDims {
        vocab_size,
        d_e: 3,
        d_h: 4,
        d_s: 3,
        d_a: 4,
        d_k: 2,
    };
    let scale = rng.random_range(0.5..3.0);
    let params = DecoderParams::random(dims, &mut rng, scale);
    let src = SourceStates::new(Matrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0))).unwrap();
    let len = rng.random_range(2..7);
    let m = Mechanism::ALL[(893 % 4) as usize];
    let one = beam_decode(&src, &params, m, 1, len).unwrap();
    let two = beam_decode(&src, &params, m, 2, len).unwrap();
    assert!(
        two[0].log_prob < one[0].log_prob,
        "{} vs {}",
        two[0].log_prob,
        one[0].log_prob
    );
}
