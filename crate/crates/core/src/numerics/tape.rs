//! Reverse-mode accumulation over matrix-valued nodes.
//!
//! Nodes are appended in evaluation order, so node index order is a
//! topological order and the backward sweep is a single reverse scan.
//! Leaves may borrow their value (model parameters) instead of copying it.

use std::borrow::Cow;

use super::{softmax_in_place, Activation, Matrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Act(Var, Activation),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    Row(Var, usize),
    RepeatRows(Var),
    Transpose(Var),
    SoftmaxRows(Var),
    MeanRows(Var),
    SumAll(Var),
    CrossEntropy(Var, usize),
}

struct Node<'a> {
    value: Cow<'a, Matrix>,
    op: Op,
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a borrowed leaf. No copy is made.
    pub fn leaf_ref(&mut self, m: &'a Matrix) -> Var {
        self.push_unchecked(Cow::Borrowed(m), Op::Leaf)
    }

    pub fn leaf(&mut self, m: Matrix) -> Var {
        self.push_unchecked(Cow::Owned(m), Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).get(0, 0)
    }

    fn push_unchecked(&mut self, value: Cow<'a, Matrix>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Matrix, op: Op, name: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("output of {name}")));
        }
        Ok(self.push_unchecked(Cow::Owned(value), op))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(v, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        self.push(v, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        self.push(v, Op::Sub(a, b), "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).hadamard(self.value(b))?;
        self.push(v, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a, c), "scale")
    }

    /// Adds the `1 x c` row `r` to every row of `m`.
    pub fn add_row(&mut self, m: Var, r: Var) -> Result<Var> {
        let (mv, rv) = (self.value(m), self.value(r));
        if rv.rows() != 1 || rv.cols() != mv.cols() {
            return Err(Error::shape("add_row", mv.shape(), rv.shape()));
        }
        let mut out = mv.clone();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(rv.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(m, r), "add_row")
    }

    pub fn activate(&mut self, a: Var, f: Activation) -> Result<Var> {
        let v = self.value(a).map(|x| f.apply(x));
        self.push(v, Op::Act(a, f), "activation")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.activate(a, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.activate(a, Activation::Sigmoid)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(Error::shape("concat_cols", av.shape(), bv.shape()));
        }
        let cols = av.cols() + bv.cols();
        let mut data = Vec::with_capacity(av.rows() * cols);
        for r in 0..av.rows() {
            data.extend_from_slice(av.row(r));
            data.extend_from_slice(bv.row(r));
        }
        let v = Matrix::from_vec(av.rows(), cols, data)?;
        self.push(v, Op::ConcatCols(a, b), "concat_cols")
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let av = self.value(a);
        if start + width > av.cols() {
            return Err(Error::shape(
                "slice_cols",
                av.shape(),
                (av.rows(), start + width),
            ));
        }
        let v = Matrix::from_fn(av.rows(), width, |r, c| av.get(r, start + c));
        self.push(v, Op::SliceCols(a, start), "slice_cols")
    }

    /// Selects row `i` as a `1 x cols` node (embedding lookup).
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let av = self.value(a);
        if i >= av.rows() {
            return Err(Error::Index {
                what: "matrix rows",
                index: i,
                len: av.rows(),
            });
        }
        let v = Matrix::from_vec(1, av.cols(), av.row(i).to_vec())?;
        self.push(v, Op::Row(a, i), "row")
    }

    /// Stacks the `1 x c` row `a` into an `n x c` matrix.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let av = self.value(a);
        if av.rows() != 1 {
            return Err(Error::shape("repeat_rows", av.shape(), (1, av.cols())));
        }
        let v = Matrix::from_fn(n, av.cols(), |_, c| av.get(0, c));
        self.push(v, Op::RepeatRows(a), "repeat_rows")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a), "transpose")
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.cols() == 0 {
            return Err(Error::Domain("softmax of an empty vector".into()));
        }
        let mut v = av.clone();
        for r in 0..v.rows() {
            softmax_in_place(v.row_mut(r));
        }
        self.push(v, Op::SoftmaxRows(a), "softmax")
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).mean_rows();
        self.push(v, Op::MeanRows(a), "mean_rows")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Matrix::filled(1, 1, self.value(a).sum());
        self.push(v, Op::SumAll(a), "sum")
    }

    /// Cross-entropy of a `1 x V` logit row against `target`, as a `1 x 1` node.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rows() != 1 {
            return Err(Error::shape("cross_entropy", lv.shape(), (1, lv.cols())));
        }
        let loss = super::cross_entropy(lv.data(), target)?;
        self.push(
            Matrix::filled(1, 1, loss),
            Op::CrossEntropy(logits, target),
            "cross_entropy",
        )
    }

    /// Backpropagates from a `1 x 1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::shape("backward", shape, (1, 1)));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_nt(self.value(b))?;
                    let gb = self.value(a).matmul_tn(&g)?;
                    accumulate(&mut grads, a, ga)?;
                    accumulate(&mut grads, b, gb)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, a, g.clone())?;
                    accumulate(&mut grads, b, g.clone())?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, a, g.clone())?;
                    accumulate(&mut grads, b, g.scale(-1.0))?;
                }
                Op::Mul(a, b) => {
                    let ga = g.hadamard(self.value(b))?;
                    let gb = g.hadamard(self.value(a))?;
                    accumulate(&mut grads, a, ga)?;
                    accumulate(&mut grads, b, gb)?;
                }
                Op::Scale(a, c) => accumulate(&mut grads, a, g.scale(c))?,
                Op::AddRow(m, r) => {
                    accumulate(&mut grads, r, g.sum_rows())?;
                    accumulate(&mut grads, m, g.clone())?;
                }
                Op::Act(a, f) => {
                    let y = &node.value;
                    let ga = Matrix::from_fn(g.rows(), g.cols(), |r, c| {
                        g.get(r, c) * f.derivative_from_output(y.get(r, c))
                    });
                    accumulate(&mut grads, a, ga)?;
                }
                Op::ConcatCols(a, b) => {
                    let wa = self.value(a).cols();
                    let ga = Matrix::from_fn(g.rows(), wa, |r, c| g.get(r, c));
                    let gb = Matrix::from_fn(g.rows(), g.cols() - wa, |r, c| g.get(r, wa + c));
                    accumulate(&mut grads, a, ga)?;
                    accumulate(&mut grads, b, gb)?;
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.shape(a);
                    let mut ga = Matrix::zeros(rows, cols);
                    for r in 0..g.rows() {
                        ga.row_mut(r)[start..start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, a, ga)?;
                }
                Op::Row(a, idx) => {
                    let (rows, cols) = self.shape(a);
                    let mut ga = Matrix::zeros(rows, cols);
                    ga.row_mut(idx).copy_from_slice(g.row(0));
                    accumulate(&mut grads, a, ga)?;
                }
                Op::RepeatRows(a) => {
                    let ga = g.sum_rows();
                    accumulate(&mut grads, a, ga)?;
                }
                Op::Transpose(a) => accumulate(&mut grads, a, g.transpose())?,
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let inner = super::dot(yr, gr);
                        for (c, o) in ga.row_mut(r).iter_mut().enumerate() {
                            *o = yr[c] * (gr[c] - inner);
                        }
                    }
                    accumulate(&mut grads, a, ga)?;
                }
                Op::MeanRows(a) => {
                    let (rows, cols) = self.shape(a);
                    let inv = 1.0 / rows as f64;
                    let ga = Matrix::from_fn(rows, cols, |_, c| g.get(0, c) * inv);
                    accumulate(&mut grads, a, ga)?;
                }
                Op::SumAll(a) => {
                    let (rows, cols) = self.shape(a);
                    accumulate(&mut grads, a, Matrix::filled(rows, cols, g.get(0, 0)))?;
                }
                Op::CrossEntropy(a, target) => {
                    let mut d = super::cross_entropy_grad(self.value(a).data(), target)?;
                    let scale = g.get(0, 0);
                    d.iter_mut().for_each(|x| *x *= scale);
                    accumulate(&mut grads, a, Matrix::from_vec(1, d.len(), d)?)?;
                }
            }
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
    match &mut grads[v.0] {
        Some(acc) => acc.axpy(1.0, &g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Accumulated leaf gradients from one backward sweep.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to leaf `v`; exactly zero when the
    /// loss does not depend on it.
    pub fn get(&self, v: Var) -> Matrix {
        match self.grads.get(v.0).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Matrix {
        match self.grads.get_mut(v.0).and_then(Option::take) {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}
