mod oracles;

use neurocap_core::attention::{
    attend, bahdanau_attend, luong_attend, multi_attend, self_attend, self_attend_query,
    AttentionDims, AttentionParams, Mechanism, SourceStates,
};
use neurocap_core::Matrix;
use oracles::{scalar_bahdanau, scalar_luong, scalar_self_query, uniform_matrix, uniform_vec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    params: AttentionParams,
    h: Vec<f64>,
    src: SourceStates,
}

fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = AttentionDims {
        d_h: rng.random_range(1..7),
        d_s: rng.random_range(1..7),
        d_a: rng.random_range(1..7),
        d_k: rng.random_range(1..5),
    };
    let scale = rng.random_range(0.1..2.0);
    let params = AttentionParams::random(dims, &mut rng, scale);
    let h = uniform_vec(&mut rng, dims.d_h, 2.0);
    let s = rng.random_range(1..10);
    let src = SourceStates::new(uniform_matrix(&mut rng, s, dims.d_s, 3.0)).unwrap();
    Case { params, h, src }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn weights_are_distributions_over_1000_inputs() {
    for seed in 0..1000 {
        let c = random_case(seed);
        for m in Mechanism::ALL {
            let out = attend(m, &c.h, &c.src, &c.params).unwrap();
            let parts = if m == Mechanism::Multi { 3 } else { 1 };
            assert_eq!(out.weights.len(), parts * c.src.len());
            for w in out.weights.chunks(c.src.len()) {
                assert!(
                    w.iter().all(|x| *x >= 0.0),
                    "seed {seed} {m}: negative weight"
                );
                let s: f64 = w.iter().sum();
                assert!(
                    (s - 1.0).abs() <= 1e-9,
                    "seed {seed} {m}: weights sum to {s}"
                );
            }
            assert!(out.context.iter().all(|x| x.is_finite()));
        }
    }
}

#[test]
fn fused_context_is_sum_of_parts_over_1000_inputs() {
    for seed in 0..1000 {
        let c = random_case(seed);
        let multi = multi_attend(&c.h, &c.src, &c.params).unwrap();
        let b = bahdanau_attend(&c.h, &c.src, &c.params).unwrap();
        let l = luong_attend(&c.h, &c.src, &c.params).unwrap();
        let s = self_attend_query(&c.h, &c.src, &c.params).unwrap();
        let sum: Vec<f64> = (0..b.context.len())
            .map(|i| b.context[i] + l.context[i] + s.context[i])
            .collect();
        assert!(close(&multi.context, &sum, 1e-12), "seed {seed}");
    }
}

#[test]
fn matches_scalar_re_evaluation() {
    for seed in 0..200 {
        let c = random_case(seed);
        let p = &c.params;
        let (w, ctx) = scalar_bahdanau(&c.h, &c.src, &p.additive_w, &p.additive_v);
        let out = bahdanau_attend(&c.h, &c.src, p).unwrap();
        assert!(
            close(&out.weights, &w, 1e-12) && close(&out.context, &ctx, 1e-12),
            "bahdanau seed {seed}"
        );

        let (w, ctx) = scalar_luong(&c.h, &c.src, &p.bilinear_w);
        let out = luong_attend(&c.h, &c.src, p).unwrap();
        assert!(
            close(&out.weights, &w, 1e-12) && close(&out.context, &ctx, 1e-12),
            "luong seed {seed}"
        );

        let (w, ctx) =
            scalar_self_query(&c.h, &c.src, &p.query_in, &p.query_w, &p.key_w, &p.value_w);
        let out = self_attend_query(&c.h, &c.src, p).unwrap();
        assert!(
            close(&out.weights, &w, 1e-12) && close(&out.context, &ctx, 1e-12),
            "self seed {seed}"
        );
    }
}

#[test]
fn luong_two_by_two_by_hand() {
    // h = [1, 2], W = [[1, 0], [0, -1]], sources (1, 1) and (2, 0):
    // hW = [1, -2]; scores -1 and 2.
    let dims = AttentionDims {
        d_h: 2,
        d_s: 2,
        d_a: 1,
        d_k: 1,
    };
    let mut p = AttentionParams::zeros(dims);
    p.bilinear_w = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
    let src = SourceStates::from_rows(&[vec![1.0, 1.0], vec![2.0, 0.0]]).unwrap();
    let out = luong_attend(&[1.0, 2.0], &src, &p).unwrap();
    let e = (3.0f64).exp();
    let (a0, a1) = (1.0 / (1.0 + e), e / (1.0 + e));
    assert!((out.weights[0] - a0).abs() < 1e-15 && (out.weights[1] - a1).abs() < 1e-15);
    assert!((out.context[0] - (a0 + 2.0 * a1)).abs() < 1e-15);
    assert!((out.context[1] - a0).abs() < 1e-15);
}

#[test]
fn self_attention_two_by_two_by_hand() {
    // Identity projections with d_k = 2: scores are dot products / sqrt(2).
    let dims = AttentionDims {
        d_h: 2,
        d_s: 2,
        d_a: 1,
        d_k: 2,
    };
    let mut p = AttentionParams::zeros(dims);
    p.query_w = Matrix::identity(2);
    p.key_w = Matrix::identity(2);
    p.value_w = Matrix::identity(2);
    let src = SourceStates::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
    let out = self_attend(&src, &p).unwrap();
    let r = 2.0f64.sqrt();
    // Row 0 scores: [1, 0] / sqrt 2; row 1 scores: [0, 4] / sqrt 2.
    let w0 = 1.0 / (1.0 + (-1.0 / r).exp());
    let w1 = 1.0 / (1.0 + (4.0 / r).exp());
    let expect = [[w0, 2.0 * (1.0 - w0)], [w1, 2.0 * (1.0 - w1)]];
    for (i, row) in expect.iter().enumerate() {
        for (j, want) in row.iter().enumerate() {
            assert!((out.get(i, j) - want).abs() < 1e-15, "({i},{j})");
        }
    }
}

#[test]
fn contexts_stay_inside_source_hull() {
    for seed in 0..300 {
        let c = random_case(seed);
        let m = c.src.matrix();
        for out in [
            bahdanau_attend(&c.h, &c.src, &c.params).unwrap(),
            luong_attend(&c.h, &c.src, &c.params).unwrap(),
        ] {
            for (j, x) in out.context.iter().enumerate() {
                let col: Vec<f64> = (0..m.rows()).map(|r| m.get(r, j)).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(
                    *x >= lo - 1e-12 && *x <= hi + 1e-12,
                    "seed {seed} coordinate {j}"
                );
            }
        }
    }
}

#[test]
fn permuting_sources_permutes_weights() {
    for seed in 0..300 {
        let c = random_case(seed);
        let n = c.src.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 10_000);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let m = c.src.matrix();
        let permuted =
            SourceStates::new(Matrix::from_fn(n, m.cols(), |r, col| m.get(perm[r], col))).unwrap();
        for f in [bahdanau_attend, luong_attend] {
            let a = f(&c.h, &c.src, &c.params).unwrap();
            let b = f(&c.h, &permuted, &c.params).unwrap();
            for (r, &p) in perm.iter().enumerate() {
                assert!((b.weights[r] - a.weights[p]).abs() < 1e-12);
            }
            assert!(close(&a.context, &b.context, 1e-12), "seed {seed}");
        }
    }
}

#[test]
fn zero_parameters_give_three_times_the_mean() {
    let dims = AttentionDims {
        d_h: 3,
        d_s: 2,
        d_a: 4,
        d_k: 2,
    };
    let mut p = AttentionParams::zeros(dims);
    // Value projection is the identity so the self branch also averages the raw states.
    p.value_w = Matrix::identity(2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let src = SourceStates::new(uniform_matrix(&mut rng, 5, 2, 1.0)).unwrap();
    let out = multi_attend(&[0.3, -0.2, 0.9], &src, &p).unwrap();
    let mean = src.mean();
    assert!(close(&out.context, &[3.0 * mean[0], 3.0 * mean[1]], 1e-12));
}

#[test]
fn silencing_two_branches_leaves_the_third() {
    let c = random_case(42);
    let mut p = c.params.clone();
    // Zero values kill the self branch; Luong and Bahdanau cannot be
    // silenced through their scores, so compare against their sum instead.
    p.value_w = Matrix::zeros(p.value_w.rows(), p.value_w.cols());
    let multi = multi_attend(&c.h, &c.src, &p).unwrap();
    let b = bahdanau_attend(&c.h, &c.src, &p).unwrap();
    let l = luong_attend(&c.h, &c.src, &p).unwrap();
    let sum: Vec<f64> = b
        .context
        .iter()
        .zip(&l.context)
        .map(|(x, y)| x + y)
        .collect();
    assert!(close(&multi.context, &sum, 1e-12));
    assert!(multi.self_attention.context.iter().all(|x| *x == 0.0));
}
