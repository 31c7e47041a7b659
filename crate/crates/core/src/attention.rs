//! Additive (Bahdanau), bilinear (Luong), scaled dot-product self-attention,
//! and their fusion by summing context vectors.
//!
//! All mechanisms consume the decoder hidden state `h_t` and the source grid
//! `H` (`S x d_s`) and produce weights over the `S` positions plus a `d_s`
//! context. The tape versions are the single implementation; the plain
//! functions wrap them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Tape, Var};

/// The attended-over feature grid: `S` positions of dimension `d_s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SourceStates(Matrix);

impl SourceStates {
    pub fn new(states: Matrix) -> Result<Self> {
        if states.rows() == 0 || states.cols() == 0 {
            return Err(Error::Domain(format!(
                "source states must be nonempty, got {}x{}",
                states.rows(),
                states.cols()
            )));
        }
        if !states.is_finite() {
            return Err(Error::NonFinite("source states".into()));
        }
        Ok(Self(states))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Number of positions `S`.
    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn mean(&self) -> Vec<f64> {
        self.0.mean_rows().into_vec()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SourceStates {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<SourceStates> for Vec<Vec<f64>> {
    fn from(s: SourceStates) -> Self {
        (0..s.len()).map(|r| s.0.row(r).to_vec()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Mechanism {
    Bahdanau,
    Luong,
    SelfAttention,
    Multi,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [
        Mechanism::Bahdanau,
        Mechanism::Luong,
        Mechanism::SelfAttention,
        Mechanism::Multi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Bahdanau => "bahdanau",
            Mechanism::Luong => "luong",
            Mechanism::SelfAttention => "self",
            Mechanism::Multi => "multi",
        }
    }

    /// Row label used in reports; the fused mechanism is reported as `mami`.
    pub fn report_label(self) -> &'static str {
        match self {
            Mechanism::Multi => "mami",
            other => other.name(),
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bahdanau" => Ok(Mechanism::Bahdanau),
            "luong" => Ok(Mechanism::Luong),
            "self" => Ok(Mechanism::SelfAttention),
            "multi" | "mami" => Ok(Mechanism::Multi),
            other => Err(Error::Config(format!(
                "unknown attention mechanism `{other}` (expected bahdanau | luong | self | multi)"
            ))),
        }
    }
}

impl TryFrom<String> for Mechanism {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Mechanism> for String {
    fn from(m: Mechanism) -> Self {
        m.name().to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionDims {
    /// Decoder hidden width.
    pub d_h: usize,
    /// Source state width.
    pub d_s: usize,
    /// Hidden width of the additive scorer.
    pub d_a: usize,
    /// Query/key width of self-attention.
    pub d_k: usize,
}

impl AttentionDims {
    pub fn validate(&self) -> Result<()> {
        if self.d_k == 0 {
            return Err(Error::Config("d_k must be at least 1".into()));
        }
        if self.d_h == 0 || self.d_s == 0 || self.d_a == 0 {
            return Err(Error::Config(format!(
                "attention dims must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Learned attention weights for all three mechanisms.
///
/// Shapes: `additive_w` is `d_a x (d_h + d_s)`, `additive_v` is `1 x d_a`,
/// `bilinear_w` is `d_h x d_s`, `query_w`/`key_w` are `d_s x d_k`,
/// `value_w` is `d_s x d_s` and `query_in` (`d_h x d_s`) maps the decoder
/// state into source space before `query_w` in decoder-query mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub dims: AttentionDims,
    pub additive_w: Matrix,
    pub additive_v: Matrix,
    pub bilinear_w: Matrix,
    pub query_w: Matrix,
    pub key_w: Matrix,
    pub value_w: Matrix,
    pub query_in: Matrix,
}

impl AttentionParams {
    pub fn zeros(dims: AttentionDims) -> Self {
        let AttentionDims { d_h, d_s, d_a, d_k } = dims;
        Self {
            dims,
            additive_w: Matrix::zeros(d_a, d_h + d_s),
            additive_v: Matrix::zeros(1, d_a),
            bilinear_w: Matrix::zeros(d_h, d_s),
            query_w: Matrix::zeros(d_s, d_k),
            key_w: Matrix::zeros(d_s, d_k),
            value_w: Matrix::zeros(d_s, d_s),
            query_in: Matrix::zeros(d_h, d_s),
        }
    }

    /// Uniform(-scale, scale) initialization.
    pub fn random<R: Rng + ?Sized>(dims: AttentionDims, rng: &mut R, scale: f64) -> Self {
        let mut p = Self::zeros(dims);
        for (_, m) in p.named_mut() {
            m.data_mut()
                .iter_mut()
                .for_each(|x| *x = rng.random_range(-scale..scale));
        }
        p
    }

    pub fn named(&self) -> [(&'static str, &Matrix); 7] {
        [
            ("attn.additive_w", &self.additive_w),
            ("attn.additive_v", &self.additive_v),
            ("attn.bilinear_w", &self.bilinear_w),
            ("attn.query_w", &self.query_w),
            ("attn.key_w", &self.key_w),
            ("attn.value_w", &self.value_w),
            ("attn.query_in", &self.query_in),
        ]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut Matrix); 7] {
        [
            ("attn.additive_w", &mut self.additive_w),
            ("attn.additive_v", &mut self.additive_v),
            ("attn.bilinear_w", &mut self.bilinear_w),
            ("attn.query_w", &mut self.query_w),
            ("attn.key_w", &mut self.key_w),
            ("attn.value_w", &mut self.value_w),
            ("attn.query_in", &mut self.query_in),
        ]
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

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> AttentionVars {
        AttentionVars {
            additive_w: tape.leaf_ref(&self.additive_w),
            additive_v: tape.leaf_ref(&self.additive_v),
            bilinear_w: tape.leaf_ref(&self.bilinear_w),
            query_w: tape.leaf_ref(&self.query_w),
            key_w: tape.leaf_ref(&self.key_w),
            value_w: tape.leaf_ref(&self.value_w),
            query_in: tape.leaf_ref(&self.query_in),
            d_k: self.dims.d_k,
        }
    }
}

/// Attention parameters registered on a tape.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub additive_w: Var,
    pub additive_v: Var,
    pub bilinear_w: Var,
    pub query_w: Var,
    pub key_w: Var,
    pub value_w: Var,
    pub query_in: Var,
    pub d_k: usize,
}

impl AttentionVars {
    pub fn all(&self) -> [Var; 7] {
        [
            self.additive_w,
            self.additive_v,
            self.bilinear_w,
            self.query_w,
            self.key_w,
            self.value_w,
            self.query_in,
        ]
    }
}

/// Per-sequence quantities computed once and reused at every decoder step.
#[derive(Clone, Copy, Debug)]
pub struct PreparedSource {
    pub states: Var,
    states_t: Var,
    keys_t: Option<Var>,
    values: Option<Var>,
    len: usize,
}

impl PreparedSource {
    pub fn new(
        tape: &mut Tape<'_>,
        vars: &AttentionVars,
        states: Var,
        mechanism: Mechanism,
    ) -> Result<Self> {
        let len = tape.shape(states).0;
        let states_t = tape.transpose(states)?;
        let (keys_t, values) = match mechanism {
            Mechanism::SelfAttention | Mechanism::Multi => {
                let keys = tape.matmul(states, vars.key_w)?;
                let keys_t = tape.transpose(keys)?;
                let values = tape.matmul(states, vars.value_w)?;
                (Some(keys_t), Some(values))
            }
            _ => (None, None),
        };
        Ok(Self {
            states,
            states_t,
            keys_t,
            values,
            len,
        })
    }
}

/// Attention result on the tape. `weights` and `parts` hold one entry per
/// sub-mechanism (three for the fused mechanism, in bahdanau, luong, self
/// order); `context` is the sum of `parts`.
#[derive(Clone, Debug)]
pub struct TapeAttention {
    pub context: Var,
    pub weights: Vec<Var>,
    pub parts: Vec<Var>,
}

fn check_query(tape: &Tape<'_>, h: Var, d_h: usize) -> Result<()> {
    let shape = tape.shape(h);
    if shape != (1, d_h) {
        return Err(Error::shape("attention query", shape, (1, d_h)));
    }
    Ok(())
}

/// `e_ts = v^T tanh(W [h_t; h_s])`, softmax over `s`, context `sum_s a_ts h_s`.
pub fn additive_on_tape(
    tape: &mut Tape<'_>,
    vars: &AttentionVars,
    h: Var,
    src: &PreparedSource,
) -> Result<(Var, Var)> {
    let d_h = tape.shape(vars.additive_w).1 - tape.shape(src.states).1;
    check_query(tape, h, d_h)?;
    let stacked = tape.repeat_rows(h, src.len)?;
    let joint = tape.concat_cols(stacked, src.states)?;
    let w_t = tape.transpose(vars.additive_w)?;
    let pre = tape.matmul(joint, w_t)?;
    let act = tape.tanh(pre)?;
    let v_t = tape.transpose(vars.additive_v)?;
    let scores = tape.matmul(act, v_t)?;
    let scores = tape.transpose(scores)?;
    let weights = tape.softmax_rows(scores)?;
    let context = tape.matmul(weights, src.states)?;
    Ok((weights, context))
}

/// `e_ts = h_t^T W h_s`.
pub fn bilinear_on_tape(
    tape: &mut Tape<'_>,
    vars: &AttentionVars,
    h: Var,
    src: &PreparedSource,
) -> Result<(Var, Var)> {
    check_query(tape, h, tape.shape(vars.bilinear_w).0)?;
    let hw = tape.matmul(h, vars.bilinear_w)?;
    let scores = tape.matmul(hw, src.states_t)?;
    let weights = tape.softmax_rows(scores)?;
    let context = tape.matmul(weights, src.states)?;
    Ok((weights, context))
}

/// Decoder-query self-attention: the query is `h_t` mapped into source
/// space and projected by `W_Q`; keys and values are the projected source.
pub fn self_query_on_tape(
    tape: &mut Tape<'_>,
    vars: &AttentionVars,
    h: Var,
    src: &PreparedSource,
) -> Result<(Var, Var)> {
    check_query(tape, h, tape.shape(vars.query_in).0)?;
    let (Some(keys_t), Some(values)) = (src.keys_t, src.values) else {
        return Err(Error::Config(
            "source was not prepared for self-attention".into(),
        ));
    };
    let lifted = tape.matmul(h, vars.query_in)?;
    let q = tape.matmul(lifted, vars.query_w)?;
    let raw = tape.matmul(q, keys_t)?;
    let scores = tape.scale(raw, 1.0 / (vars.d_k as f64).sqrt())?;
    let weights = tape.softmax_rows(scores)?;
    let context = tape.matmul(weights, values)?;
    Ok((weights, context))
}

pub fn attend_on_tape(
    tape: &mut Tape<'_>,
    mechanism: Mechanism,
    vars: &AttentionVars,
    h: Var,
    src: &PreparedSource,
) -> Result<TapeAttention> {
    let single = |(weights, context): (Var, Var)| TapeAttention {
        context,
        weights: vec![weights],
        parts: vec![context],
    };
    match mechanism {
        Mechanism::Bahdanau => additive_on_tape(tape, vars, h, src).map(single),
        Mechanism::Luong => bilinear_on_tape(tape, vars, h, src).map(single),
        Mechanism::SelfAttention => self_query_on_tape(tape, vars, h, src).map(single),
        Mechanism::Multi => {
            let (wb, cb) = additive_on_tape(tape, vars, h, src)?;
            let (wl, cl) = bilinear_on_tape(tape, vars, h, src)?;
            let (ws, cs) = self_query_on_tape(tape, vars, h, src)?;
            let partial = tape.add(cb, cl)?;
            let context = tape.add(partial, cs)?;
            Ok(TapeAttention {
                context,
                weights: vec![wb, wl, ws],
                parts: vec![cb, cl, cs],
            })
        }
    }
}

/// Full self-attention over the source grid:
/// `softmax(Q K^T / sqrt(d_k)) V` with `Q = H W_Q`, `K = H W_K`, `V = H W_V`.
pub fn self_attention_rows_on_tape(
    tape: &mut Tape<'_>,
    vars: &AttentionVars,
    states: Var,
) -> Result<Var> {
    let q = tape.matmul(states, vars.query_w)?;
    let k = tape.matmul(states, vars.key_w)?;
    let v = tape.matmul(states, vars.value_w)?;
    let k_t = tape.transpose(k)?;
    let raw = tape.matmul(q, k_t)?;
    let scores = tape.scale(raw, 1.0 / (vars.d_k as f64).sqrt())?;
    let weights = tape.softmax_rows(scores)?;
    tape.matmul(weights, v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionOutput {
    /// Distribution over source positions.
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
}

/// Result of the fused mechanism. `context` is the elementwise sum of the
/// three sub-contexts; each sub-mechanism's output is kept for inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiAttentionOutput {
    pub context: Vec<f64>,
    pub bahdanau: AttentionOutput,
    pub luong: AttentionOutput,
    pub self_attention: AttentionOutput,
}

fn check_inputs(h_t: &[f64], src: &SourceStates, params: &AttentionParams) -> Result<()> {
    params.validate()?;
    if h_t.len() != params.dims.d_h {
        return Err(Error::shape(
            "attention query",
            (1, h_t.len()),
            (1, params.dims.d_h),
        ));
    }
    if src.dim() != params.dims.d_s {
        return Err(Error::shape(
            "source states",
            src.matrix().shape(),
            (src.len(), params.dims.d_s),
        ));
    }
    Ok(())
}

/// A mechanism on the tape, returning its weights and context.
type SingleOnTape = fn(&mut Tape<'_>, &AttentionVars, Var, &PreparedSource) -> Result<(Var, Var)>;

fn run_single(
    h_t: &[f64],
    src: &SourceStates,
    params: &AttentionParams,
    mechanism: Mechanism,
    f: SingleOnTape,
) -> Result<AttentionOutput> {
    check_inputs(h_t, src, params)?;
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let states = tape.leaf_ref(src.matrix());
    let h = tape.leaf(Matrix::row_vector(h_t.to_vec())?);
    let prepared = PreparedSource::new(&mut tape, &vars, states, mechanism)?;
    let (w, c) = f(&mut tape, &vars, h, &prepared)?;
    Ok(AttentionOutput {
        weights: tape.value(w).data().to_vec(),
        context: tape.value(c).data().to_vec(),
    })
}

pub fn bahdanau_attend(
    h_t: &[f64],
    src: &SourceStates,
    params: &AttentionParams,
) -> Result<AttentionOutput> {
    run_single(h_t, src, params, Mechanism::Bahdanau, additive_on_tape)
}

pub fn luong_attend(
    h_t: &[f64],
    src: &SourceStates,
    params: &AttentionParams,
) -> Result<AttentionOutput> {
    run_single(h_t, src, params, Mechanism::Luong, bilinear_on_tape)
}

/// Self-attention in decoder-query mode.
pub fn self_attend_query(
    h_t: &[f64],
    src: &SourceStates,
    params: &AttentionParams,
) -> Result<AttentionOutput> {
    run_single(
        h_t,
        src,
        params,
        Mechanism::SelfAttention,
        self_query_on_tape,
    )
}

/// Self-attention over the source grid; one output row per position.
pub fn self_attend(src: &SourceStates, params: &AttentionParams) -> Result<Matrix> {
    params.validate()?;
    if src.dim() != params.dims.d_s {
        return Err(Error::shape(
            "source states",
            src.matrix().shape(),
            (src.len(), params.dims.d_s),
        ));
    }
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let states = tape.leaf_ref(src.matrix());
    let out = self_attention_rows_on_tape(&mut tape, &vars, states)?;
    Ok(tape.value(out).clone())
}

pub fn multi_attend(
    h_t: &[f64],
    src: &SourceStates,
    params: &AttentionParams,
) -> Result<MultiAttentionOutput> {
    check_inputs(h_t, src, params)?;
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let states = tape.leaf_ref(src.matrix());
    let h = tape.leaf(Matrix::row_vector(h_t.to_vec())?);
    let prepared = PreparedSource::new(&mut tape, &vars, states, Mechanism::Multi)?;
    let out = attend_on_tape(&mut tape, Mechanism::Multi, &vars, h, &prepared)?;
    let read = |v: Var| tape.value(v).data().to_vec();
    let part = |i: usize| AttentionOutput {
        weights: read(out.weights[i]),
        context: read(out.parts[i]),
    };
    Ok(MultiAttentionOutput {
        context: read(out.context),
        bahdanau: part(0),
        luong: part(1),
        self_attention: part(2),
    })
}

/// Dispatches on the mechanism; the fused mechanism reports its three
/// weight rows concatenated in `bahdanau, luong, self` order.
pub fn attend(
    mechanism: Mechanism,
    h_t: &[f64],
    src: &SourceStates,
    params: &AttentionParams,
) -> Result<AttentionOutput> {
    match mechanism {
        Mechanism::Bahdanau => bahdanau_attend(h_t, src, params),
        Mechanism::Luong => luong_attend(h_t, src, params),
        Mechanism::SelfAttention => self_attend_query(h_t, src, params),
        Mechanism::Multi => {
            let m = multi_attend(h_t, src, params)?;
            let mut weights = m.bahdanau.weights;
            weights.extend(m.luong.weights);
            weights.extend(m.self_attention.weights);
            Ok(AttentionOutput {
                weights,
                context: m.context,
            })
        }
    }
}
