//! Reference implementations the library is checked against. Each one is
//! written from the textbook definition with plain loops over `Vec`s; none
//! of them calls the routine it is an oracle for.
#![allow(dead_code)]

use neurocap_core::attention::{Mechanism, SourceStates};
use neurocap_core::decoder::{init_state, step, DecoderParams};
use neurocap_core::Matrix;
use rand::Rng;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;

pub fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Central differences of `f` with respect to every entry of every input.
pub fn numeric_gradient(f: &dyn Fn(&[Matrix]) -> f64, inputs: &[Matrix], eps: f64) -> Vec<Matrix> {
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..work.len() {
        let (r, c) = work[i].shape();
        let mut g = Matrix::zeros(r, c);
        for j in 0..work[i].len() {
            let x0 = work[i].data()[j];
            work[i].data_mut()[j] = x0 + eps;
            let up = f(&work);
            work[i].data_mut()[j] = x0 - eps;
            let down = f(&work);
            work[i].data_mut()[j] = x0;
            g.data_mut()[j] = (up - down) / (2.0 * eps);
        }
        out.push(g);
    }
    out
}

/// Central differences at `eps = 1e-5` carry roughly `1e-16 * |f| / eps`
/// of rounding noise, so coordinates that agree to within this absolute
/// amount are counted as exact even when the gradient itself is tiny.
pub const ABS_FLOOR: f64 = 1e-10;

/// Worst coordinate-wise relative error between two gradient lists,
/// ignoring coordinates already within [`ABS_FLOOR`].
pub fn worst_rel_err(analytic: &[Matrix], numeric: &[Matrix]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!(a.shape(), n.shape());
        for (x, y) in a.data().iter().zip(n.data()) {
            if (x - y).abs() > ABS_FLOOR {
                worst = worst.max(rel_err(*x, *y));
            }
        }
    }
    worst
}

// ------------------------------------------------------------- softmax

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    v.iter().map(|x| x - lse).collect()
}

// ----------------------------------------------------------- attention

fn rows(src: &SourceStates) -> Vec<Vec<f64>> {
    let m = src.matrix();
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn weighted_sum(weights: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; rows[0].len()];
    for (w, r) in weights.iter().zip(rows) {
        for (o, x) in out.iter_mut().zip(r) {
            *o += w * x;
        }
    }
    out
}

/// `x^T M` for a row vector `x`.
fn vec_mat(x: &[f64], m: &Matrix) -> Vec<f64> {
    (0..m.cols())
        .map(|c| (0..m.rows()).map(|r| x[r] * m.get(r, c)).sum())
        .collect()
}

/// Additive scoring `v^T tanh(W [h; h_s])`; `w` is `d_a x (d_h + d_s)`.
pub fn scalar_bahdanau(
    h: &[f64],
    src: &SourceStates,
    w: &Matrix,
    v: &Matrix,
) -> (Vec<f64>, Vec<f64>) {
    let rows = rows(src);
    let scores: Vec<f64> = rows
        .iter()
        .map(|hs| {
            let joint: Vec<f64> = h.iter().chain(hs).copied().collect();
            (0..w.rows())
                .map(|a| {
                    let pre: f64 = (0..w.cols()).map(|k| w.get(a, k) * joint[k]).sum();
                    v.get(0, a) * pre.tanh()
                })
                .sum()
        })
        .collect();
    let weights = softmax(&scores);
    let ctx = weighted_sum(&weights, &rows);
    (weights, ctx)
}

/// Bilinear scoring `h^T W h_s`.
pub fn scalar_luong(h: &[f64], src: &SourceStates, w: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let rows = rows(src);
    let hw = vec_mat(h, w);
    let scores: Vec<f64> = rows
        .iter()
        .map(|hs| hw.iter().zip(hs).map(|(a, b)| a * b).sum())
        .collect();
    let weights = softmax(&scores);
    let ctx = weighted_sum(&weights, &rows);
    (weights, ctx)
}

/// Scaled dot-product attention with a single query `q = (h W_in) W_Q`
/// against keys `h_s W_K` and values `h_s W_V`.
pub fn scalar_self_query(
    h: &[f64],
    src: &SourceStates,
    w_in: &Matrix,
    w_q: &Matrix,
    w_k: &Matrix,
    w_v: &Matrix,
) -> (Vec<f64>, Vec<f64>) {
    let rows = rows(src);
    let q = vec_mat(&vec_mat(h, w_in), w_q);
    let d_k = w_k.cols() as f64;
    let scores: Vec<f64> = rows
        .iter()
        .map(|hs| {
            let k = vec_mat(hs, w_k);
            q.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() / d_k.sqrt()
        })
        .collect();
    let weights = softmax(&scores);
    let values: Vec<Vec<f64>> = rows.iter().map(|hs| vec_mat(hs, w_v)).collect();
    let ctx = weighted_sum(&weights, &values);
    (weights, ctx)
}

// ---------------------------------------------------------------- BLEU

fn strip(tokens: &[usize]) -> Vec<usize> {
    tokens
        .iter()
        .copied()
        .filter(|&t| t != PAD && t != BOS && t != EOS)
        .collect()
}

/// Occurrences of `gram` in `seq` by direct scanning.
fn occurrences(seq: &[usize], gram: &[usize]) -> usize {
    if gram.len() > seq.len() {
        return 0;
    }
    (0..=seq.len() - gram.len())
        .filter(|&i| &seq[i..i + gram.len()] == gram)
        .count()
}

/// Corpus BLEU (x100) with clipped counts, closest reference length (ties
/// to the shorter), a `1/(2 total)` floor for zero-match orders, orders with
/// no candidate n-grams left out of the mean, and 0 for an empty corpus.
pub fn brute_bleu(cands: &[Vec<usize>], refs: &[Vec<Vec<usize>>], max_n: usize) -> f64 {
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (cand, rs) in cands.iter().zip(refs) {
        let cand = strip(cand);
        let rs: Vec<Vec<usize>> = rs.iter().map(|r| strip(r)).collect();
        c_len += cand.len();
        let mut best: Option<usize> = None;
        for r in &rs {
            let better = match best {
                None => true,
                Some(b) => {
                    let (d, db) = (r.len().abs_diff(cand.len()), b.abs_diff(cand.len()));
                    d < db || (d == db && r.len() < b)
                }
            };
            if better {
                best = Some(r.len());
            }
        }
        r_len += best.unwrap();
        for n in 1..=max_n {
            if cand.len() < n {
                continue;
            }
            let mut seen: Vec<&[usize]> = Vec::new();
            for i in 0..=cand.len() - n {
                let g = &cand[i..i + n];
                if seen.contains(&g) {
                    continue;
                }
                seen.push(g);
                let c = occurrences(&cand, g);
                let m = rs.iter().map(|r| occurrences(r, g)).max().unwrap();
                matched[n - 1] += c.min(m);
                total[n - 1] += c;
            }
        }
    }
    if c_len == 0 {
        return 0.0;
    }
    let mut logs = Vec::new();
    for n in 0..max_n {
        if total[n] == 0 {
            continue;
        }
        let p = if matched[n] == 0 {
            1.0 / (2.0 * total[n] as f64)
        } else {
            matched[n] as f64 / total[n] as f64
        };
        logs.push(p.ln());
    }
    let bp = if c_len < r_len {
        (1.0 - r_len as f64 / c_len as f64).exp()
    } else {
        1.0
    };
    bp * (logs.iter().sum::<f64>() / logs.len() as f64).exp() * 100.0
}

// ---------------------------------------------------------- BERTScore

/// One-hot greedy matching reduces to membership: precision is the share
/// of candidate tokens that occur in the reference, recall the converse.
pub fn membership_pr(cand: &[usize], reference: &[usize]) -> (f64, f64) {
    let (c, r) = (strip(cand), strip(reference));
    let p = c.iter().filter(|t| r.contains(t)).count() as f64 / c.len() as f64;
    let rc = r.iter().filter(|t| c.contains(t)).count() as f64 / r.len() as f64;
    (p, rc)
}

// ---------------------------------------------------------- decoding

/// Every emittable sequence of at most `max_len` tokens (stopping at EOS),
/// scored by summing the decoder's per-step log-softmax.
pub fn enumerate_sequences(
    params: &DecoderParams,
    src: &SourceStates,
    mechanism: Mechanism,
    max_len: usize,
) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    let s0 = init_state(src, params).unwrap();
    let mut stack = vec![(Vec::<usize>::new(), 0.0, BOS, s0)];
    while let Some((tokens, score, prev, state)) = stack.pop() {
        let (logits, next) = step(prev, &state, src, params, mechanism).unwrap();
        let lp = log_softmax(&logits);
        for (id, l) in lp.iter().enumerate() {
            if id == PAD || id == BOS {
                continue;
            }
            let mut t = tokens.clone();
            t.push(id);
            let s = score + l;
            if id == EOS || t.len() == max_len {
                out.push((t, s));
            } else {
                stack.push((t, s, id, next.clone()));
            }
        }
    }
    out
}

/// Highest-scoring complete sequence; lexically smaller wins exact ties.
pub fn exhaustive_best(
    params: &DecoderParams,
    src: &SourceStates,
    mechanism: Mechanism,
    max_len: usize,
) -> (Vec<usize>, f64) {
    enumerate_sequences(params, src, mechanism, max_len)
        .into_iter()
        .min_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)))
        .unwrap()
}
