//! Reverse-mode automatic differentiation over dense tensors.
//!
//! Operations are recorded on a [`Tape`] as they execute. Every node owns its
//! forward value, which doubles as the saved activation for the backward pass.
//! Nodes are appended in execution order, so the node list is always in
//! topological order and [`Tape::backward`] is a single reverse sweep.

use std::cell::{Ref, RefCell};
use std::fmt;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Primitive operation kinds understood by the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Constant,
    MatMul,
    Add,
    AddBias,
    Sub,
    Mul,
    Scale,
    Relu,
    Tanh,
    Exp,
    Log,
    Concat,
    Sum,
    Mean,
    SumRows,
    Softmax,
    LogSoftmax,
    GatherRows,
    ScatterAddRows,
    Clamp,
    Minimum,
}

enum Op<T> {
    Leaf,
    Constant,
    MatMul(usize, usize),
    Add(usize, usize),
    AddBias(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Relu(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Concat { inputs: Vec<usize>, axis: usize },
    Sum(usize),
    Mean(usize),
    SumRows(usize),
    Softmax(usize),
    LogSoftmax(usize),
    GatherRows { input: usize, index: Vec<usize> },
    ScatterAddRows { input: usize, index: Vec<usize> },
    Clamp { input: usize, lo: T, hi: T },
    Minimum(usize, usize),
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Constant => OpKind::Constant,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Add(..) => OpKind::Add,
            Op::AddBias(..) => OpKind::AddBias,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::Relu(_) => OpKind::Relu,
            Op::Tanh(_) => OpKind::Tanh,
            Op::Exp(_) => OpKind::Exp,
            Op::Log(_) => OpKind::Log,
            Op::Concat { .. } => OpKind::Concat,
            Op::Sum(_) => OpKind::Sum,
            Op::Mean(_) => OpKind::Mean,
            Op::SumRows(_) => OpKind::SumRows,
            Op::Softmax(_) => OpKind::Softmax,
            Op::LogSoftmax(_) => OpKind::LogSoftmax,
            Op::GatherRows { .. } => OpKind::GatherRows,
            Op::ScatterAddRows { .. } => OpKind::ScatterAddRows,
            Op::Clamp { .. } => OpKind::Clamp,
            Op::Minimum(..) => OpKind::Minimum,
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records operations for one forward/backward computation.
///
/// A tape is single-threaded (`!Sync`); build one per worker.
pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
    leaf_grads: RefCell<Vec<Option<Vec<T>>>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Scalar> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(#{} {:?})", self.id, self.shape())
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            leaf_grads: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Differentiable input.
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable input.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Constant, false)
    }

    pub fn kind(&self, var: Var<'_, T>) -> OpKind {
        self.nodes.borrow()[var.id].op.kind()
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, var: Var<'_, T>) -> Option<Tensor<T>> {
        let grads = self.leaf_grads.borrow();
        let g = grads.get(var.id)?.as_ref()?;
        let shape = self.nodes.borrow()[var.id].value.shape().to_vec();
        Some(Tensor::new(shape, g.clone()).expect("gradient shape"))
    }

    /// Accumulated gradient of a leaf, zeros when unreached.
    pub fn grad_or_zeros(&self, var: Var<'_, T>) -> Tensor<T> {
        self.grad(var).unwrap_or_else(|| Tensor::zeros(var.shape().as_slice()))
    }

    pub fn zero_grad(&self) {
        self.leaf_grads.borrow_mut().clear();
    }

    /// Propagates `d output / d leaf` into every reachable leaf.
    ///
    /// Gradients accumulate across repeated calls until [`Tape::zero_grad`].
    pub fn backward(&self, output: Var<'_, T>) -> Result<()> {
        let nodes = self.nodes.borrow();
        let out = &nodes[output.id];
        if !out.value.is_scalar() {
            return Err(TensorError::NonScalarOutput(out.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; output.id + 1];
        grads[output.id] = Some(vec![T::one()]);
        let mut leaf_grads = self.leaf_grads.borrow_mut();
        if leaf_grads.len() < nodes.len() {
            leaf_grads.resize(nodes.len(), None);
        }

        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            if let Op::Leaf = node.op {
                match &mut leaf_grads[id] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b),
                    slot @ None => *slot = Some(g),
                }
                continue;
            }
            backprop(&nodes, id, &g, &mut grads);
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], id: usize, f: impl FnOnce(&mut [T])) {
    if !nodes[id].requires_grad {
        return;
    }
    let slot = grads[id].get_or_insert_with(|| vec![T::zero(); nodes[id].value.len()]);
    f(slot);
}

fn row_len(shape: &[usize]) -> usize {
    shape[shape.len() - 1]
}

fn backprop<T: Scalar>(nodes: &[Node<T>], id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let out = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf | Op::Constant => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let (m, k) = av.dims2().expect("matmul lhs rank 2");
            let n = bv.dims2().expect("matmul rhs rank 2").1;
            let (a, b) = (*a, *b);
            // dA = G · Bᵀ ; dB = Aᵀ · G
            accumulate(nodes, grads, a, |ga| {
                T::gemm(m, n, k, g, (n as isize, 1), bv.data(), (1, n as isize), ga, true);
            });
            accumulate(nodes, grads, b, |gb| {
                T::gemm(k, m, n, av.data(), (1, k as isize), g, (n as isize, 1), gb, true);
            });
        }
        Op::Add(a, b) => {
            for x in [*a, *b] {
                accumulate(nodes, grads, x, |gx| add_into(gx, g));
            }
        }
        Op::AddBias(a, b) => {
            accumulate(nodes, grads, *a, |ga| add_into(ga, g));
            let n = nodes[*b].value.len();
            accumulate(nodes, grads, *b, |gb| {
                for row in g.chunks(n) {
                    add_into(gb, row);
                }
            });
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, *a, |ga| add_into(ga, g));
            accumulate(nodes, grads, *b, |gb| {
                gb.iter_mut().zip(g).for_each(|(x, &d)| *x = *x - d)
            });
        }
        Op::Mul(a, b) => {
            let (av, bv) = (nodes[*a].value.data(), nodes[*b].value.data());
            accumulate(nodes, grads, *a, |ga| {
                for ((x, &d), &o) in ga.iter_mut().zip(g).zip(bv) {
                    *x = *x + d * o;
                }
            });
            accumulate(nodes, grads, *b, |gb| {
                for ((x, &d), &o) in gb.iter_mut().zip(g).zip(av) {
                    *x = *x + d * o;
                }
            });
        }
        Op::Scale(a, c) => {
            let c = *c;
            accumulate(nodes, grads, *a, |ga| {
                ga.iter_mut().zip(g).for_each(|(x, &d)| *x = *x + d * c)
            });
        }
        Op::Relu(a) => {
            let xv = nodes[*a].value.data();
            accumulate(nodes, grads, *a, |ga| {
                for ((x, &d), &v) in ga.iter_mut().zip(g).zip(xv) {
                    if v > T::zero() {
                        *x = *x + d;
                    }
                }
            });
        }
        Op::Tanh(a) => {
            let yv = out.data();
            accumulate(nodes, grads, *a, |ga| {
                for ((x, &d), &y) in ga.iter_mut().zip(g).zip(yv) {
                    *x = *x + d * (T::one() - y * y);
                }
            });
        }
        Op::Exp(a) => {
            let yv = out.data();
            accumulate(nodes, grads, *a, |ga| {
                for ((x, &d), &y) in ga.iter_mut().zip(g).zip(yv) {
                    *x = *x + d * y;
                }
            });
        }
        Op::Log(a) => {
            let xv = nodes[*a].value.data();
            accumulate(nodes, grads, *a, |ga| {
                for ((x, &d), &v) in ga.iter_mut().zip(g).zip(xv) {
                    *x = *x + d / v;
                }
            });
        }
        Op::Concat { inputs, axis } => {
            let out_cols = row_len(out.shape());
            let mut offset = 0;
            for &inp in inputs {
                let shape = nodes[inp].value.shape();
                if *axis == 0 {
                    let len = nodes[inp].value.len();
                    let src = &g[offset..offset + len];
                    accumulate(nodes, grads, inp, |gx| add_into(gx, src));
                    offset += len;
                } else {
                    let cols = row_len(shape);
                    accumulate(nodes, grads, inp, |gx| {
                        for (r, dst) in gx.chunks_mut(cols).enumerate() {
                            let start = r * out_cols + offset;
                            add_into(dst, &g[start..start + cols]);
                        }
                    });
                    offset += cols;
                }
            }
        }
        Op::Sum(a) => {
            let d = g[0];
            accumulate(nodes, grads, *a, |ga| ga.iter_mut().for_each(|x| *x = *x + d));
        }
        Op::Mean(a) => {
            let d = g[0] / T::from_usize(nodes[*a].value.len()).expect("len");
            accumulate(nodes, grads, *a, |ga| ga.iter_mut().for_each(|x| *x = *x + d));
        }
        Op::SumRows(a) => {
            let cols = row_len(nodes[*a].value.shape());
            accumulate(nodes, grads, *a, |ga| {
                for (row, &d) in ga.chunks_mut(cols).zip(g) {
                    row.iter_mut().for_each(|x| *x = *x + d);
                }
            });
        }
        Op::Softmax(a) => {
            let cols = row_len(out.shape());
            let yv = out.data();
            accumulate(nodes, grads, *a, |ga| {
                for ((gx, gy), y) in ga.chunks_mut(cols).zip(g.chunks(cols)).zip(yv.chunks(cols)) {
                    let dot: T = gy.iter().zip(y).map(|(&d, &p)| d * p).sum();
                    for ((x, &d), &p) in gx.iter_mut().zip(gy).zip(y) {
                        *x = *x + p * (d - dot);
                    }
                }
            });
        }
        Op::LogSoftmax(a) => {
            let cols = row_len(out.shape());
            let yv = out.data();
            accumulate(nodes, grads, *a, |ga| {
                for ((gx, gy), y) in ga.chunks_mut(cols).zip(g.chunks(cols)).zip(yv.chunks(cols)) {
                    let total: T = gy.iter().copied().sum();
                    for ((x, &d), &ly) in gx.iter_mut().zip(gy).zip(y) {
                        *x = *x + d - ly.exp() * total;
                    }
                }
            });
        }
        Op::GatherRows { input, index } => {
            let cols = row_len(out.shape());
            accumulate(nodes, grads, *input, |gx| {
                for (r, &src) in index.iter().enumerate() {
                    add_into(&mut gx[src * cols..(src + 1) * cols], &g[r * cols..(r + 1) * cols]);
                }
            });
        }
        Op::ScatterAddRows { input, index } => {
            let cols = row_len(out.shape());
            accumulate(nodes, grads, *input, |gx| {
                for (r, &dst) in index.iter().enumerate() {
                    add_into(&mut gx[r * cols..(r + 1) * cols], &g[dst * cols..(dst + 1) * cols]);
                }
            });
        }
        Op::Clamp { input, lo, hi } => {
            let xv = nodes[*input].value.data();
            let (lo, hi) = (*lo, *hi);
            accumulate(nodes, grads, *input, |gx| {
                for ((x, &d), &v) in gx.iter_mut().zip(g).zip(xv) {
                    if v >= lo && v <= hi {
                        *x = *x + d;
                    }
                }
            });
        }
        Op::Minimum(a, b) => {
            let (av, bv) = (nodes[*a].value.data(), nodes[*b].value.data());
            accumulate(nodes, grads, *a, |ga| {
                for (((x, &d), &p), &q) in ga.iter_mut().zip(g).zip(av).zip(bv) {
                    if p <= q {
                        *x = *x + d;
                    }
                }
            });
            accumulate(nodes, grads, *b, |gb| {
                for (((x, &d), &p), &q) in gb.iter_mut().zip(g).zip(av).zip(bv) {
                    if p > q {
                        *x = *x + d;
                    }
                }
            });
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(a, &b)| *a = *a + b);
}

fn shape_err<T: Scalar>(op: &'static str, vars: &[Var<'_, T>]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        shapes: vars.iter().map(|v| v.shape()).collect(),
    }
}

fn row_softmax<T: Scalar>(x: &[T], cols: usize, log: bool) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        if log {
            let lse = sum.ln();
            out.extend(row.iter().map(|&v| v - max - lse));
        } else {
            out.extend(row.iter().map(|&v| (v - max).exp() / sum));
        }
    }
    out
}

// Arithmetic is fallible (shape checks), so these are methods, not operator impls.
#[allow(clippy::should_implement_trait)]
impl<'t, T: Scalar> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    /// Borrow of the forward value.
    pub fn value(&self) -> Ref<'t, Tensor<T>> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn item(&self) -> T {
        self.value().item()
    }

    fn unary(self, op: Op<T>, f: impl Fn(&Tensor<T>) -> Tensor<T>) -> Var<'t, T> {
        let value = f(&self.value());
        let rg = self.tape.requires_grad(self.id);
        self.tape.push(value, op, rg)
    }

    fn binary(self, other: Var<'t, T>, op: Op<T>, value: Tensor<T>) -> Var<'t, T> {
        let rg = self.tape.requires_grad(self.id) || self.tape.requires_grad(other.id);
        self.tape.push(value, op, rg)
    }

    fn elementwise(
        self,
        other: Var<'t, T>,
        name: &'static str,
        op: Op<T>,
        f: impl Fn(T, T) -> T,
    ) -> Result<Var<'t, T>> {
        let value = {
            let (a, b) = (self.value(), other.value());
            if a.shape() != b.shape() {
                return Err(shape_err(name, &[self, other]));
            }
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        Ok(self.binary(other, op, value))
    }

    /// `[m, k] · [k, n] → [m, n]`
    pub fn matmul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        let value = {
            let (a, b) = (self.value(), other.value());
            match (a.dims2(), b.dims2()) {
                (Some((m, k)), Some((k2, n))) if k == k2 => {
                    let mut out = Tensor::zeros(&[m, n]);
                    T::gemm(
                        m,
                        k,
                        n,
                        a.data(),
                        (k as isize, 1),
                        b.data(),
                        (n as isize, 1),
                        out.data_mut(),
                        false,
                    );
                    out
                }
                _ => return Err(shape_err("matmul", &[self, other])),
            }
        };
        Ok(self.binary(other, Op::MatMul(self.id, other.id), value))
    }

    /// Elementwise sum of equal shapes, or `[m, n] + [n]` bias broadcast over rows.
    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa == sb {
            return self.elementwise(other, "add", Op::Add(self.id, other.id), |x, y| x + y);
        }
        if sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0] {
            let value = {
                let (a, b) = (self.value(), other.value());
                let data = a
                    .data()
                    .chunks(sb[0])
                    .flat_map(|row| row.iter().zip(b.data()).map(|(&x, &y)| x + y))
                    .collect();
                Tensor::new(sa, data)?
            };
            return Ok(self.binary(other, Op::AddBias(self.id, other.id), value));
        }
        Err(shape_err("add", &[self, other]))
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.elementwise(other, "sub", Op::Sub(self.id, other.id), |x, y| x - y)
    }

    pub fn mul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.elementwise(other, "mul", Op::Mul(self.id, other.id), |x, y| x * y)
    }

    pub fn minimum(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.elementwise(other, "minimum", Op::Minimum(self.id, other.id), |x, y| {
            if x <= y {
                x
            } else {
                y
            }
        })
    }

    pub fn scale(self, c: T) -> Var<'t, T> {
        self.unary(Op::Scale(self.id, c), |t| t.map(|v| v * c))
    }

    pub fn neg(self) -> Var<'t, T> {
        self.scale(-T::one())
    }

    pub fn relu(self) -> Var<'t, T> {
        self.unary(Op::Relu(self.id), |t| {
            t.map(|v| if v > T::zero() { v } else { T::zero() })
        })
    }

    pub fn tanh(self) -> Var<'t, T> {
        self.unary(Op::Tanh(self.id), |t| t.map(T::tanh))
    }

    pub fn exp(self) -> Var<'t, T> {
        self.unary(Op::Exp(self.id), |t| t.map(T::exp))
    }

    pub fn log(self) -> Var<'t, T> {
        self.unary(Op::Log(self.id), |t| t.map(T::ln))
    }

    pub fn clamp(self, lo: T, hi: T) -> Var<'t, T> {
        self.unary(Op::Clamp { input: self.id, lo, hi }, |t| t.map(|v| v.max(lo).min(hi)))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(self) -> Var<'t, T> {
        self.unary(Op::Sum(self.id), |t| Tensor::scalar(t.data().iter().copied().sum()))
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(self) -> Var<'t, T> {
        self.unary(Op::Mean(self.id), |t| {
            let n = T::from_usize(t.len()).expect("len");
            Tensor::scalar(t.data().iter().copied().sum::<T>() / n)
        })
    }

    /// Sum over the last axis: `[m, n] → [m]`, `[n] → [1]`.
    pub fn sum_rows(self) -> Var<'t, T> {
        self.unary(Op::SumRows(self.id), |t| {
            let cols = row_len(t.shape());
            Tensor::vector(t.data().chunks(cols).map(|r| r.iter().copied().sum()).collect())
        })
    }

    /// Softmax over the last axis.
    pub fn softmax(self) -> Var<'t, T> {
        self.unary(Op::Softmax(self.id), |t| {
            let cols = row_len(t.shape());
            Tensor::new(t.shape().to_vec(), row_softmax(t.data(), cols, false)).expect("shape")
        })
    }

    /// Numerically stable `log(softmax(x))` over the last axis.
    pub fn log_softmax(self) -> Var<'t, T> {
        self.unary(Op::LogSoftmax(self.id), |t| {
            let cols = row_len(t.shape());
            Tensor::new(t.shape().to_vec(), row_softmax(t.data(), cols, true)).expect("shape")
        })
    }

    /// Concatenates rank-2 tensors along `axis` (0 = rows, 1 = columns), or
    /// rank-1 tensors along axis 0.
    pub fn concat(parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
        let first = *parts
            .first()
            .ok_or_else(|| TensorError::InvalidArgument("concat of nothing".into()))?;
        let tape = first.tape;
        let shapes: Vec<Vec<usize>> = parts.iter().map(|p| p.shape()).collect();
        let rank = shapes[0].len();
        let ok = match (rank, axis) {
            (1, 0) => shapes.iter().all(|s| s.len() == 1),
            (2, 0) => shapes.iter().all(|s| s.len() == 2 && s[1] == shapes[0][1]),
            (2, 1) => shapes.iter().all(|s| s.len() == 2 && s[0] == shapes[0][0]),
            _ => false,
        };
        if !ok {
            return Err(shape_err("concat", parts));
        }
        let value = {
            let nodes = tape.nodes.borrow();
            let vals: Vec<&Tensor<T>> = parts.iter().map(|p| &nodes[p.id].value).collect();
            if axis == 0 {
                let data: Vec<T> = vals.iter().flat_map(|v| v.data().iter().copied()).collect();
                let mut shape = shapes[0].clone();
                shape[0] = shapes.iter().map(|s| s[0]).sum();
                Tensor::new(shape, data)?
            } else {
                let rows = shapes[0][0];
                let cols: usize = shapes.iter().map(|s| s[1]).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for v in &vals {
                        data.extend_from_slice(v.row(r));
                    }
                }
                Tensor::new(vec![rows, cols], data)?
            }
        };
        let rg = parts.iter().any(|p| tape.requires_grad(p.id));
        let inputs = parts.iter().map(|p| p.id).collect();
        Ok(tape.push(value, Op::Concat { inputs, axis }, rg))
    }

    /// `out[r] = self[index[r]]` for a rank-2 input.
    pub fn gather_rows(self, index: &[usize]) -> Result<Var<'t, T>> {
        let value = {
            let v = self.value();
            let (rows, cols) = v.dims2().ok_or_else(|| shape_err("gather_rows", &[self]))?;
            if index.is_empty() {
                return Err(TensorError::InvalidArgument("gather_rows: empty index".into()));
            }
            let mut data = Vec::with_capacity(index.len() * cols);
            for &i in index {
                if i >= rows {
                    return Err(TensorError::IndexOutOfRange {
                        op: "gather_rows",
                        index: i,
                        rows,
                    });
                }
                data.extend_from_slice(v.row(i));
            }
            Tensor::new(vec![index.len(), cols], data)?
        };
        Ok(self.unary_owned(
            Op::GatherRows {
                input: self.id,
                index: index.to_vec(),
            },
            value,
        ))
    }

    /// `out[index[r]] += self[r]` into a zero tensor with `out_rows` rows.
    pub fn scatter_add_rows(self, index: &[usize], out_rows: usize) -> Result<Var<'t, T>> {
        let value = {
            let v = self.value();
            let (rows, cols) = v.dims2().ok_or_else(|| shape_err("scatter_add_rows", &[self]))?;
            if index.len() != rows || out_rows == 0 {
                return Err(shape_err("scatter_add_rows", &[self]));
            }
            let mut out = Tensor::zeros(&[out_rows, cols]);
            let data = out.data_mut();
            for (r, &dst) in index.iter().enumerate() {
                if dst >= out_rows {
                    return Err(TensorError::IndexOutOfRange {
                        op: "scatter_add_rows",
                        index: dst,
                        rows: out_rows,
                    });
                }
                add_into(&mut data[dst * cols..(dst + 1) * cols], v.row(r));
            }
            out
        };
        Ok(self.unary_owned(
            Op::ScatterAddRows {
                input: self.id,
                index: index.to_vec(),
            },
            value,
        ))
    }

    fn unary_owned(self, op: Op<T>, value: Tensor<T>) -> Var<'t, T> {
        let rg = self.tape.requires_grad(self.id);
        self.tape.push(value, op, rg)
    }
}

/// Applies a primitive by kind, for table-driven callers.
pub fn apply_primitive<'t, T: Scalar>(kind: OpKind, inputs: &[Var<'t, T>]) -> Result<Var<'t, T>> {
    let arity = |n: usize| {
        if inputs.len() == n {
            Ok(())
        } else {
            Err(TensorError::InvalidArgument(format!(
                "{kind:?} takes {n} inputs, got {}",
                inputs.len()
            )))
        }
    };
    match kind {
        OpKind::MatMul => arity(2).and_then(|_| inputs[0].matmul(inputs[1])),
        OpKind::Add | OpKind::AddBias => arity(2).and_then(|_| inputs[0].add(inputs[1])),
        OpKind::Sub => arity(2).and_then(|_| inputs[0].sub(inputs[1])),
        OpKind::Mul => arity(2).and_then(|_| inputs[0].mul(inputs[1])),
        OpKind::Minimum => arity(2).and_then(|_| inputs[0].minimum(inputs[1])),
        OpKind::Relu => arity(1).map(|_| inputs[0].relu()),
        OpKind::Tanh => arity(1).map(|_| inputs[0].tanh()),
        OpKind::Exp => arity(1).map(|_| inputs[0].exp()),
        OpKind::Log => arity(1).map(|_| inputs[0].log()),
        OpKind::Sum => arity(1).map(|_| inputs[0].sum()),
        OpKind::Mean => arity(1).map(|_| inputs[0].mean()),
        OpKind::SumRows => arity(1).map(|_| inputs[0].sum_rows()),
        OpKind::Softmax => arity(1).map(|_| inputs[0].softmax()),
        OpKind::LogSoftmax => arity(1).map(|_| inputs[0].log_softmax()),
        OpKind::Concat => Var::concat(inputs, 1),
        other => Err(TensorError::InvalidArgument(format!(
            "{other:?} needs extra arguments; call the Var method directly"
        ))),
    }
}
