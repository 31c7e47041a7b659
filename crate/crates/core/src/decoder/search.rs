use std::cmp::Ordering;

use super::{
    check_source, init_on_tape, step, step_on_tape, DecoderParams, DecoderVars, TapeState,
};
use crate::attention::{Mechanism, PreparedSource, SourceStates};
use crate::data::{BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::numerics::{log_softmax, Tape};

/// A decoded caption. `tokens` excludes `BOS` and ends with `EOS` when one
/// was emitted.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
}

impl Hypothesis {
    pub fn finished(&self) -> bool {
        self.tokens.last() == Some(&EOS)
    }

    /// Tokens without the trailing `EOS`.
    pub fn body(&self) -> &[usize] {
        match self.tokens.split_last() {
            Some((&EOS, rest)) => rest,
            _ => &self.tokens,
        }
    }
}

fn emittable(id: usize) -> bool {
    id != PAD && id != BOS
}

/// Higher score first, then lexically smaller tokens.
fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Keeps one tape alive across decoding steps so the source projections are
/// computed once per record.
struct Session<'a> {
    tape: Tape<'a>,
    vars: DecoderVars,
    src: PreparedSource,
    mechanism: Mechanism,
}

impl<'a> Session<'a> {
    fn new(
        params: &'a DecoderParams,
        src: &'a SourceStates,
        mechanism: Mechanism,
    ) -> Result<(Self, TapeState)> {
        check_source(params, src)?;
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape);
        let states = tape.leaf_ref(src.matrix());
        let prepared = PreparedSource::new(&mut tape, &vars.attention, states, mechanism)?;
        let s0 = init_on_tape(&mut tape, &vars, &prepared)?;
        Ok((
            Self {
                tape,
                vars,
                src: prepared,
                mechanism,
            },
            s0,
        ))
    }

    fn advance(&mut self, prev: usize, state: TapeState) -> Result<(Vec<f64>, TapeState)> {
        let out = step_on_tape(
            &mut self.tape,
            &self.vars,
            self.mechanism,
            &self.src,
            prev,
            state,
        )?;
        let lp = log_softmax(self.tape.value(out.logits).data())?;
        Ok((lp, out.state))
    }
}

/// Argmax decoding from `BOS`, at most `max_len` emitted tokens. `PAD` and
/// `BOS` are never emitted; ties go to the lowest id.
pub fn greedy_decode(
    src: &SourceStates,
    params: &DecoderParams,
    mechanism: Mechanism,
    max_len: usize,
) -> Result<Vec<usize>> {
    let (mut session, mut state) = Session::new(params, src, mechanism)?;
    let mut tokens = Vec::new();
    let mut prev = BOS;
    // Compare cumulative scores (not raw logits) so the choice matches a
    // width-1 beam bit for bit.
    let mut score = 0.0;
    while tokens.len() < max_len {
        let (lp, next) = session.advance(prev, state)?;
        let mut best: Option<(usize, f64)> = None;
        for (id, l) in lp.iter().enumerate().filter(|(id, _)| emittable(*id)) {
            let s = score + l;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((id, s));
            }
        }
        let (id, s) = best.expect("vocabulary has an emittable token");
        tokens.push(id);
        score = s;
        if id == EOS {
            break;
        }
        prev = id;
        state = next;
    }
    Ok(tokens)
}

/// Beam search on cumulative log-probability. A hypothesis that emits `EOS`
/// retires and its slot is not refilled; hypotheses still alive after
/// `max_len` tokens are returned unfinished. Output is sorted by score.
pub fn beam_decode(
    src: &SourceStates,
    params: &DecoderParams,
    mechanism: Mechanism,
    width: usize,
    max_len: usize,
) -> Result<Vec<Hypothesis>> {
    if width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let (mut session, s0) = Session::new(params, src, mechanism)?;
    let mut live: Vec<(Hypothesis, TapeState)> = vec![(
        Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
        },
        s0,
    )];
    let mut done: Vec<Hypothesis> = Vec::new();
    let mut slots = width;

    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        let mut expanded: Vec<(Hypothesis, usize)> = Vec::new();
        let mut next_states = Vec::with_capacity(live.len());
        for (parent, (hyp, state)) in live.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(BOS);
            let (lp, next) = session.advance(prev, *state)?;
            next_states.push(next);
            for (id, l) in lp.iter().enumerate().filter(|(id, _)| emittable(*id)) {
                let mut tokens = hyp.tokens.clone();
                tokens.push(id);
                expanded.push((
                    Hypothesis {
                        tokens,
                        log_prob: hyp.log_prob + l,
                    },
                    parent,
                ));
            }
        }
        expanded.sort_by(|a, b| rank(&a.0, &b.0));
        expanded.truncate(slots);

        live = Vec::new();
        for (hyp, parent) in expanded {
            if hyp.finished() {
                done.push(hyp);
                slots -= 1;
            } else {
                live.push((hyp, next_states[parent]));
            }
        }
    }
    done.extend(live.into_iter().map(|(h, _)| h));
    done.sort_by(rank);
    Ok(done)
}

/// Scores `tokens` (without `BOS`) by stepping the decoder one token at a
/// time.
pub fn sequence_log_prob(
    tokens: &[usize],
    src: &SourceStates,
    params: &DecoderParams,
    mechanism: Mechanism,
) -> Result<f64> {
    let mut state = super::init_state(src, params)?;
    let mut prev = BOS;
    let mut total = 0.0;
    for &tok in tokens {
        let (logits, next) = step(prev, &state, src, params, mechanism)?;
        let lp = log_softmax(&logits)?;
        let l = *lp.get(tok).ok_or(Error::Index {
            what: "vocabulary",
            index: tok,
            len: lp.len(),
        })?;
        total += l;
        prev = tok;
        state = next;
    }
    Ok(total)
}
