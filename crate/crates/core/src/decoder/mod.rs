//! LSTM caption decoder with pluggable attention.
//!
//! One step: attend from the previous hidden state, feed
//! `[embed(prev_token); context]` through the LSTM cell, project
//! `[h_new; context]` to vocabulary logits.

mod search;

pub use search::{beam_decode, greedy_decode, sequence_log_prob, Hypothesis};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{
    attend_on_tape, AttentionDims, AttentionParams, AttentionVars, Mechanism, PreparedSource,
    SourceStates,
};
use crate::data::{CaptionRecord, PAD};
use crate::error::{Error, Result};
use crate::numerics::{Gradients, Matrix, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderDims {
    pub vocab_size: usize,
    /// Token embedding width.
    pub d_e: usize,
    pub d_h: usize,
    pub d_s: usize,
    pub d_a: usize,
    pub d_k: usize,
}

impl DecoderDims {
    pub fn attention(&self) -> AttentionDims {
        AttentionDims {
            d_h: self.d_h,
            d_s: self.d_s,
            d_a: self.d_a,
            d_k: self.d_k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 3 || self.d_e == 0 {
            return Err(Error::Config(format!(
                "decoder dims must be positive with |V| >= 3: {self:?}"
            )));
        }
        self.attention().validate()
    }
}

/// All learned decoder weights. Gates are laid out `[input, forget, cell, output]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    pub dims: DecoderDims,
    /// `|V| x d_e`; row `PAD` stays zero.
    pub embedding: Matrix,
    /// `(d_e + d_s) x 4 d_h`
    pub lstm_input: Matrix,
    /// `d_h x 4 d_h`
    pub lstm_recurrent: Matrix,
    pub lstm_bias: Matrix,
    pub init_h: Matrix,
    pub init_h_bias: Matrix,
    pub init_c: Matrix,
    pub init_c_bias: Matrix,
    /// `(d_h + d_s) x |V|`
    pub output: Matrix,
    pub output_bias: Matrix,
    pub attention: AttentionParams,
}

impl DecoderParams {
    pub fn zeros(dims: DecoderDims) -> Self {
        let DecoderDims {
            vocab_size: v,
            d_e,
            d_h,
            d_s,
            ..
        } = dims;
        Self {
            dims,
            embedding: Matrix::zeros(v, d_e),
            lstm_input: Matrix::zeros(d_e + d_s, 4 * d_h),
            lstm_recurrent: Matrix::zeros(d_h, 4 * d_h),
            lstm_bias: Matrix::zeros(1, 4 * d_h),
            init_h: Matrix::zeros(d_s, d_h),
            init_h_bias: Matrix::zeros(1, d_h),
            init_c: Matrix::zeros(d_s, d_h),
            init_c_bias: Matrix::zeros(1, d_h),
            output: Matrix::zeros(d_h + d_s, v),
            output_bias: Matrix::zeros(1, v),
            attention: AttentionParams::zeros(dims.attention()),
        }
    }

    /// Uniform(-scale, scale) for every entry except the `PAD` embedding row.
    pub fn random<R: Rng + ?Sized>(dims: DecoderDims, rng: &mut R, scale: f64) -> Self {
        let mut p = Self::zeros(dims);
        for (_, m) in p.named_mut() {
            m.data_mut()
                .iter_mut()
                .for_each(|x| *x = rng.random_range(-scale..scale));
        }
        p.embedding.row_mut(PAD).fill(0.0);
        p
    }

    pub fn named(&self) -> Vec<(&'static str, &Matrix)> {
        let mut v = vec![
            ("embedding", &self.embedding),
            ("lstm.input", &self.lstm_input),
            ("lstm.recurrent", &self.lstm_recurrent),
            ("lstm.bias", &self.lstm_bias),
            ("init.h", &self.init_h),
            ("init.h_bias", &self.init_h_bias),
            ("init.c", &self.init_c),
            ("init.c_bias", &self.init_c_bias),
            ("output", &self.output),
            ("output.bias", &self.output_bias),
        ];
        v.extend(self.attention.named());
        v
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut v = vec![
            ("embedding", &mut self.embedding),
            ("lstm.input", &mut self.lstm_input),
            ("lstm.recurrent", &mut self.lstm_recurrent),
            ("lstm.bias", &mut self.lstm_bias),
            ("init.h", &mut self.init_h),
            ("init.h_bias", &mut self.init_h_bias),
            ("init.c", &mut self.init_c),
            ("init.c_bias", &mut self.init_c_bias),
            ("output", &mut self.output),
            ("output.bias", &mut self.output_bias),
        ];
        v.extend(self.attention.named_mut());
        v
    }

    pub fn num_values(&self) -> usize {
        self.named().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let fresh = Self::zeros(self.dims);
        for ((name, have), (_, want)) in self.named().iter().zip(fresh.named().iter()) {
            if have.shape() != want.shape() {
                return Err(Error::Config(format!(
                    "{name} has shape {}x{}, expected {}x{}",
                    have.rows(),
                    have.cols(),
                    want.rows(),
                    want.cols()
                )));
            }
        }
        Ok(())
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> DecoderVars {
        DecoderVars {
            embedding: tape.leaf_ref(&self.embedding),
            lstm_input: tape.leaf_ref(&self.lstm_input),
            lstm_recurrent: tape.leaf_ref(&self.lstm_recurrent),
            lstm_bias: tape.leaf_ref(&self.lstm_bias),
            init_h: tape.leaf_ref(&self.init_h),
            init_h_bias: tape.leaf_ref(&self.init_h_bias),
            init_c: tape.leaf_ref(&self.init_c),
            init_c_bias: tape.leaf_ref(&self.init_c_bias),
            output: tape.leaf_ref(&self.output),
            output_bias: tape.leaf_ref(&self.output_bias),
            attention: self.attention.bind(tape),
            d_h: self.dims.d_h,
        }
    }
}

/// Decoder parameters registered on a tape.
#[derive(Clone, Copy, Debug)]
pub struct DecoderVars {
    pub embedding: Var,
    pub lstm_input: Var,
    pub lstm_recurrent: Var,
    pub lstm_bias: Var,
    pub init_h: Var,
    pub init_h_bias: Var,
    pub init_c: Var,
    pub init_c_bias: Var,
    pub output: Var,
    pub output_bias: Var,
    pub attention: AttentionVars,
    d_h: usize,
}

impl DecoderVars {
    /// Leaves in the same order as [`DecoderParams::named`].
    pub fn all(&self) -> Vec<Var> {
        let mut v = vec![
            self.embedding,
            self.lstm_input,
            self.lstm_recurrent,
            self.lstm_bias,
            self.init_h,
            self.init_h_bias,
            self.init_c,
            self.init_c_bias,
            self.output,
            self.output_bias,
        ];
        v.extend(self.attention.all());
        v
    }

    /// Collects parameter gradients in [`DecoderParams::named`] order.
    pub fn gradients(&self, grads: &mut Gradients) -> Vec<Matrix> {
        self.all().into_iter().map(|v| grads.take(v)).collect()
    }
}

/// Hidden/cell pair on the tape plus the last context.
#[derive(Clone, Copy, Debug)]
pub struct TapeState {
    pub h: Var,
    pub c: Var,
    pub context: Option<Var>,
}

pub struct TapeStep {
    pub logits: Var,
    pub state: TapeState,
}

/// `h0 = mean(H) W_h + b_h`, `c0 = mean(H) W_c + b_c`.
pub fn init_on_tape(
    tape: &mut Tape<'_>,
    vars: &DecoderVars,
    src: &PreparedSource,
) -> Result<TapeState> {
    let mean = tape.mean_rows(src.states)?;
    let h = tape.matmul(mean, vars.init_h)?;
    let h = tape.add(h, vars.init_h_bias)?;
    let c = tape.matmul(mean, vars.init_c)?;
    let c = tape.add(c, vars.init_c_bias)?;
    Ok(TapeState {
        h,
        c,
        context: None,
    })
}

pub fn step_on_tape(
    tape: &mut Tape<'_>,
    vars: &DecoderVars,
    mechanism: Mechanism,
    src: &PreparedSource,
    prev_token: usize,
    state: TapeState,
) -> Result<TapeStep> {
    let attn = attend_on_tape(tape, mechanism, &vars.attention, state.h, src)?;
    let embedded = tape.row(vars.embedding, prev_token)?;
    let x = tape.concat_cols(embedded, attn.context)?;

    let from_x = tape.matmul(x, vars.lstm_input)?;
    let from_h = tape.matmul(state.h, vars.lstm_recurrent)?;
    let gates = tape.add(from_x, from_h)?;
    let gates = tape.add(gates, vars.lstm_bias)?;

    let d = vars.d_h;
    let i = tape.slice_cols(gates, 0, d)?;
    let i = tape.sigmoid(i)?;
    let f = tape.slice_cols(gates, d, d)?;
    let f = tape.sigmoid(f)?;
    let g = tape.slice_cols(gates, 2 * d, d)?;
    let g = tape.tanh(g)?;
    let o = tape.slice_cols(gates, 3 * d, d)?;
    let o = tape.sigmoid(o)?;

    let keep = tape.mul(f, state.c)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let squashed = tape.tanh(c)?;
    let h = tape.mul(o, squashed)?;

    let readout = tape.concat_cols(h, attn.context)?;
    let logits = tape.matmul(readout, vars.output)?;
    let logits = tape.add(logits, vars.output_bias)?;
    Ok(TapeStep {
        logits,
        state: TapeState {
            h,
            c,
            context: Some(attn.context),
        },
    })
}

/// Teacher-forced cross-entropy averaged over the target positions of one
/// caption (`ids[1..=eos]`). Positions past `EOS` never enter the graph.
pub fn caption_loss_on_tape(
    tape: &mut Tape<'_>,
    vars: &DecoderVars,
    mechanism: Mechanism,
    src: &PreparedSource,
    caption: &CaptionRecord,
) -> Result<Var> {
    let targets = caption.mask.iter().take_while(|m| **m).count();
    if targets < 2 {
        return Err(Error::Domain("caption has no target positions".into()));
    }
    let mut state = init_on_tape(tape, vars, src)?;
    let mut total: Option<Var> = None;
    for t in 1..targets {
        let step = step_on_tape(tape, vars, mechanism, src, caption.ids[t - 1], state)?;
        let ce = tape.cross_entropy(step.logits, caption.ids[t])?;
        total = Some(match total {
            Some(acc) => tape.add(acc, ce)?,
            None => ce,
        });
        state = step.state;
    }
    let total = total.expect("at least one target");
    tape.scale(total, 1.0 / (targets - 1) as f64)
}

/// Loss and parameter gradients (in [`DecoderParams::named`] order) for one
/// caption.
pub fn caption_loss_and_grad(
    params: &DecoderParams,
    mechanism: Mechanism,
    src: &SourceStates,
    caption: &CaptionRecord,
) -> Result<(f64, Vec<Matrix>)> {
    check_source(params, src)?;
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let states = tape.leaf_ref(src.matrix());
    let prepared = PreparedSource::new(&mut tape, &vars.attention, states, mechanism)?;
    let loss = caption_loss_on_tape(&mut tape, &vars, mechanism, &prepared, caption)?;
    let value = tape.scalar(loss);
    let mut grads = tape.backward(loss)?;
    Ok((value, vars.gradients(&mut grads)))
}

pub(crate) fn check_source(params: &DecoderParams, src: &SourceStates) -> Result<()> {
    if src.dim() != params.dims.d_s {
        return Err(Error::shape(
            "source states",
            src.matrix().shape(),
            (src.len(), params.dims.d_s),
        ));
    }
    Ok(())
}

/// Plain-value decoder state.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub prev_context: Vec<f64>,
}

pub fn init_state(src: &SourceStates, params: &DecoderParams) -> Result<DecoderState> {
    check_source(params, src)?;
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let states = tape.leaf_ref(src.matrix());
    let prepared = PreparedSource::new(&mut tape, &vars.attention, states, Mechanism::Bahdanau)?;
    let s = init_on_tape(&mut tape, &vars, &prepared)?;
    Ok(DecoderState {
        h: tape.value(s.h).data().to_vec(),
        c: tape.value(s.c).data().to_vec(),
        prev_context: vec![0.0; params.dims.d_s],
    })
}

/// One decoding step from plain values: `(logits, next state)`.
pub fn step(
    prev_token: usize,
    state: &DecoderState,
    src: &SourceStates,
    params: &DecoderParams,
    mechanism: Mechanism,
) -> Result<(Vec<f64>, DecoderState)> {
    check_source(params, src)?;
    if prev_token >= params.dims.vocab_size {
        return Err(Error::Index {
            what: "vocabulary",
            index: prev_token,
            len: params.dims.vocab_size,
        });
    }
    let d_h = params.dims.d_h;
    if state.h.len() != d_h || state.c.len() != d_h {
        return Err(Error::shape("decoder state", (1, state.h.len()), (1, d_h)));
    }
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let states = tape.leaf_ref(src.matrix());
    let prepared = PreparedSource::new(&mut tape, &vars.attention, states, mechanism)?;
    let h = tape.leaf(Matrix::row_vector(state.h.clone())?);
    let c = tape.leaf(Matrix::row_vector(state.c.clone())?);
    let out = step_on_tape(
        &mut tape,
        &vars,
        mechanism,
        &prepared,
        prev_token,
        TapeState {
            h,
            c,
            context: None,
        },
    )?;
    let context = out.state.context.expect("step sets context");
    Ok((
        tape.value(out.logits).data().to_vec(),
        DecoderState {
            h: tape.value(out.state.h).data().to_vec(),
            c: tape.value(out.state.c).data().to_vec(),
            prev_context: tape.value(context).data().to_vec(),
        },
    ))
}
