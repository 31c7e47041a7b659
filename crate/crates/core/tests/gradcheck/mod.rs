//! Finite-difference comparisons shared by the gradient tests and the
//! acceptance run. Every check returns the worst relative error it saw
//! rather than asserting, so callers pick their own tolerance.
#![allow(dead_code)]

use crate::oracles::{numeric_gradient, uniform_matrix, worst_rel_err};
use neurocap_core::attention::{
    attend_on_tape, AttentionDims, AttentionParams, AttentionVars, Mechanism, PreparedSource,
    SourceStates,
};
use neurocap_core::decoder::{
    caption_loss_and_grad, init_on_tape, step_on_tape, DecoderDims, DecoderParams,
};
use neurocap_core::numerics::{Activation, Tape, Var};
use neurocap_core::{CaptionRecord, Matrix, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-5;

type Build = dyn Fn(&mut Tape<'_>, &[Var]) -> Result<Var>;
type Make = dyn Fn(&mut ChaCha8Rng) -> Vec<Matrix>;

/// Reduces the op's output to a scalar with a fixed random weighting so
/// every output entry contributes a distinct coefficient.
fn weighted(tape: &mut Tape<'_>, out: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = tape.leaf(uniform_matrix(&mut rng, r, c, 1.0));
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

fn check(build: &Build, inputs: &[Matrix], seed: u64) -> f64 {
    let value = |xs: &[Matrix]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = build(&mut tape, &vars).unwrap();
        let s = weighted(&mut tape, out, seed).unwrap();
        tape.scalar(s)
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = build(&mut tape, &vars).unwrap();
    let s = weighted(&mut tape, out, seed).unwrap();
    let grads = tape.backward(s).unwrap();
    let analytic: Vec<Matrix> = vars.iter().map(|v| grads.get(*v)).collect();
    let numeric = numeric_gradient(&value, inputs, EPS);
    worst_rel_err(&analytic, &numeric)
}

fn over_seeds(seeds: u64, make: &Make, build: &Build) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = make(&mut rng);
        worst = worst.max(check(build, &inputs, seed));
    }
    worst
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (
        rng.random_range(1..5),
        rng.random_range(1..5),
        rng.random_range(1..5),
    )
}

fn pair_same(rng: &mut ChaCha8Rng) -> Vec<Matrix> {
    let (m, n, _) = dims(rng);
    vec![
        uniform_matrix(rng, m, n, 1.0),
        uniform_matrix(rng, m, n, 1.0),
    ]
}

fn single(rng: &mut ChaCha8Rng) -> Vec<Matrix> {
    let (m, n, _) = dims(rng);
    vec![uniform_matrix(rng, m, n, 2.0)]
}

/// Worst error per tape primitive over `seeds` random shapes and values.
pub fn primitives(seeds: u64) -> Vec<(&'static str, f64)> {
    let cases: Vec<(&'static str, Box<Make>, Box<Build>)> = vec![
        (
            "matmul",
            Box::new(|rng| {
                let (m, k, n) = dims(rng);
                vec![
                    uniform_matrix(rng, m, k, 1.0),
                    uniform_matrix(rng, k, n, 1.0),
                ]
            }),
            Box::new(|t, v| t.matmul(v[0], v[1])),
        ),
        (
            "add",
            Box::new(pair_same),
            Box::new(|t, v| t.add(v[0], v[1])),
        ),
        (
            "sub",
            Box::new(pair_same),
            Box::new(|t, v| t.sub(v[0], v[1])),
        ),
        (
            "mul",
            Box::new(pair_same),
            Box::new(|t, v| t.mul(v[0], v[1])),
        ),
        (
            "add_row",
            Box::new(|rng| {
                let (m, n, _) = dims(rng);
                vec![
                    uniform_matrix(rng, m, n, 1.0),
                    uniform_matrix(rng, 1, n, 1.0),
                ]
            }),
            Box::new(|t, v| t.add_row(v[0], v[1])),
        ),
        (
            "concat_cols",
            Box::new(|rng| {
                let (m, a, b) = dims(rng);
                vec![
                    uniform_matrix(rng, m, a, 1.0),
                    uniform_matrix(rng, m, b, 1.0),
                ]
            }),
            Box::new(|t, v| t.concat_cols(v[0], v[1])),
        ),
        (
            "scale",
            Box::new(single),
            Box::new(|t, v| t.scale(v[0], -1.7)),
        ),
        ("tanh", Box::new(single), Box::new(|t, v| t.tanh(v[0]))),
        (
            "sigmoid",
            Box::new(single),
            Box::new(|t, v| t.sigmoid(v[0])),
        ),
        (
            "activate(tanh)",
            Box::new(single),
            Box::new(|t, v| t.activate(v[0], Activation::Tanh)),
        ),
        (
            "transpose",
            Box::new(single),
            Box::new(|t, v| t.transpose(v[0])),
        ),
        (
            "softmax_rows",
            Box::new(single),
            Box::new(|t, v| t.softmax_rows(v[0])),
        ),
        (
            "mean_rows",
            Box::new(single),
            Box::new(|t, v| t.mean_rows(v[0])),
        ),
        ("sum", Box::new(single), Box::new(|t, v| t.sum(v[0]))),
        (
            "slice_cols",
            Box::new(single),
            Box::new(|t, v| {
                let n = t.shape(v[0]).1;
                t.slice_cols(v[0], n / 2, n - n / 2)
            }),
        ),
        (
            "row",
            Box::new(single),
            Box::new(|t, v| {
                let m = t.shape(v[0]).0;
                t.row(v[0], m - 1)
            }),
        ),
        (
            "repeat_rows",
            Box::new(|rng| {
                let n = rng.random_range(1..5);
                vec![uniform_matrix(rng, 1, n, 1.0)]
            }),
            Box::new(|t, v| t.repeat_rows(v[0], 3)),
        ),
        (
            "cross_entropy",
            Box::new(|rng| {
                let n = rng.random_range(2..8);
                vec![uniform_matrix(rng, 1, n, 3.0)]
            }),
            Box::new(|t, v| {
                let n = t.shape(v[0]).1;
                t.cross_entropy(v[0], n / 2)
            }),
        ),
    ];
    cases
        .iter()
        .map(|(name, make, build)| (*name, over_seeds(seeds, make.as_ref(), build.as_ref())))
        .collect()
}

fn attention_dims() -> AttentionDims {
    AttentionDims {
        d_h: 3,
        d_s: 2,
        d_a: 3,
        d_k: 2,
    }
}

/// Inputs: the seven attention weights, then `h`, then the source grid.
fn attention_inputs(rng: &mut ChaCha8Rng) -> Vec<Matrix> {
    let dims = attention_dims();
    let p = AttentionParams::random(dims, rng, 0.8);
    let mut xs: Vec<Matrix> = p.named().iter().map(|(_, m)| (*m).clone()).collect();
    xs.push(uniform_matrix(rng, 1, dims.d_h, 1.0));
    let s = rng.random_range(1..5);
    xs.push(uniform_matrix(rng, s, dims.d_s, 1.0));
    xs
}

/// Context vector of one mechanism with respect to its weights, the
/// decoder state and the source states.
pub fn attention(mechanism: Mechanism, seeds: u64) -> f64 {
    let build = move |tape: &mut Tape<'_>, v: &[Var]| -> Result<Var> {
        let vars = AttentionVars {
            additive_w: v[0],
            additive_v: v[1],
            bilinear_w: v[2],
            query_w: v[3],
            key_w: v[4],
            value_w: v[5],
            query_in: v[6],
            d_k: attention_dims().d_k,
        };
        let src = PreparedSource::new(tape, &vars, v[8], mechanism)?;
        Ok(attend_on_tape(tape, mechanism, &vars, v[7], &src)?.context)
    };
    over_seeds(seeds, &attention_inputs, &build)
}

fn toy_dims() -> DecoderDims {
    DecoderDims {
        vocab_size: 5,
        d_e: 3,
        d_h: 3,
        d_s: 2,
        d_a: 3,
        d_k: 2,
    }
}

fn with_values(template: &DecoderParams, xs: &[Matrix]) -> DecoderParams {
    let mut p = template.clone();
    for ((_, m), x) in p.named_mut().into_iter().zip(xs) {
        *m = x.clone();
    }
    p
}

/// Logits of the first decoding step after a random previous token,
/// weighted to a scalar, as a function of every decoder parameter.
pub fn decoder_step(mechanism: Mechanism, seeds: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = DecoderParams::random(toy_dims(), &mut rng, 0.8);
        let positions = rng.random_range(1..5);
        let src = uniform_matrix(&mut rng, positions, 2, 1.0);
        let prev = rng.random_range(1..5);
        let run = |p: &DecoderParams| -> (f64, Vec<Matrix>) {
            let mut tape = Tape::new();
            let vars = p.bind(&mut tape);
            let states = tape.leaf_ref(&src);
            let prepared =
                PreparedSource::new(&mut tape, &vars.attention, states, mechanism).unwrap();
            let s0 = init_on_tape(&mut tape, &vars, &prepared).unwrap();
            let out = step_on_tape(&mut tape, &vars, mechanism, &prepared, prev, s0).unwrap();
            let s = weighted(&mut tape, out.logits, seed).unwrap();
            let value = tape.scalar(s);
            let mut grads = tape.backward(s).unwrap();
            (value, vars.gradients(&mut grads))
        };
        let inputs: Vec<Matrix> = params.named().iter().map(|(_, m)| (*m).clone()).collect();
        let (_, analytic) = run(&params);
        let numeric = numeric_gradient(&|xs| run(&with_values(&params, xs)).0, &inputs, EPS);
        worst = worst.max(worst_rel_err(&analytic, &numeric));
    }
    worst
}

fn caption(ids: &[usize], padded: usize) -> CaptionRecord {
    let mut full = ids.to_vec();
    let eos = full.len() - 1;
    full.resize(padded, 0);
    CaptionRecord {
        text: String::new(),
        mask: (0..padded).map(|i| i <= eos).collect(),
        ids: full,
    }
}

/// Mean teacher-forced loss over two records with three target positions
/// each, through the whole unrolled decoder.
pub fn unrolled_loss(mechanism: Mechanism, seeds: u64) -> f64 {
    let records = [caption(&[1, 3, 4, 2], 6), caption(&[1, 4, 4, 2], 6)];
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = DecoderParams::random(toy_dims(), &mut rng, 0.8);
        let srcs: Vec<SourceStates> = (0..2)
            .map(|_| SourceStates::new(uniform_matrix(&mut rng, 3, 2, 1.0)).unwrap())
            .collect();
        let loss = |p: &DecoderParams| -> (f64, Vec<Matrix>) {
            let mut total = 0.0;
            let mut grads: Option<Vec<Matrix>> = None;
            for (src, cap) in srcs.iter().zip(&records) {
                let (l, g) = caption_loss_and_grad(p, mechanism, src, cap).unwrap();
                total += l / 2.0;
                grads = Some(match grads {
                    None => g.iter().map(|m| m.scale(0.5)).collect(),
                    Some(mut acc) => {
                        for (a, b) in acc.iter_mut().zip(&g) {
                            a.axpy(0.5, b).unwrap();
                        }
                        acc
                    }
                });
            }
            (total, grads.unwrap())
        };
        let inputs: Vec<Matrix> = params.named().iter().map(|(_, m)| (*m).clone()).collect();
        let (_, analytic) = loss(&params);
        let numeric = numeric_gradient(&|xs| loss(&with_values(&params, xs)).0, &inputs, EPS);
        worst = worst.max(worst_rel_err(&analytic, &numeric));
    }
    worst
}
