use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use super::gemm;
use super::param::{Param, ParamId};
use super::tensor::{Shape, Tensor};
use super::DiffError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    Relu(Var),
    Tanh(Var),
    Sqrt(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Square(Var),
    Neg(Var),
    Scale(Var, f64),
    ColAffine { x: Var, scale: Vec<f64> },
    MeanLast(Var),
    SumLast(Var),
    MaxLast { x: Var, argmax: Vec<usize> },
    Sum(Var),
    Concat(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Records primitive operations in evaluation order and replays them in
/// reverse to accumulate gradients.
///
/// Nodes are appended only after their inputs exist, so the node vector is
/// already a topological order. A tape supports one backward pass; build a
/// fresh tape for the next forward.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    frozen: bool,
    check_finite: bool,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            frozen: false,
            check_finite: cfg!(debug_assertions),
            backward_done: false,
        }
    }

    /// Turns the per-op non-finite scan on or off. On by default when debug
    /// assertions are enabled.
    pub fn with_finite_checks(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    /// While frozen, newly bound parameters enter the tape as constants.
    /// Gradients still flow through them to upstream inputs.
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to `v`, if `v`
    /// requires one.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Binds a parameter. Binding the same parameter twice returns the same
    /// node so that shared weights accumulate one gradient.
    pub fn param(&mut self, p: &Param) -> Var {
        if let Some(&v) = self.params.get(&p.id()) {
            return v;
        }
        let v = self.leaf(p.value().clone(), !self.frozen);
        self.params.insert(p.id(), v);
        v
    }

    pub fn param_var(&self, id: ParamId) -> Option<Var> {
        self.params.get(&id).copied()
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, name: &'static str, value: Tensor, inputs: &[Var], op: Op) -> Result<Var, DiffError> {
        if self.backward_done {
            return Err(DiffError::TapeConsumed);
        }
        if self.check_finite && !value.is_finite() {
            return Err(DiffError::NonFinite { op: name });
        }
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, rg, op))
    }

    fn unary_map(&mut self, name: &'static str, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var, DiffError> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|&a| f(a)).collect();
        let out = Tensor::new(xv.rows(), xv.cols(), data)?;
        self.record(name, out, &[x], op)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Shape, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(DiffError::ShapeMismatch { op, left: sa, right: sb });
        }
        Ok(sa)
    }

    fn binary_map(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var, DiffError> {
        let s = self.same_shape(name, a, b)?;
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let data = av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(s.rows, s.cols, data)?;
        self.record(name, out, &[a, b], op)
    }

    /// `x · w + b` with `x: [B, in]`, `w: [in, out]`, `b: [1, out]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, DiffError> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.cols != sw.rows {
            return Err(DiffError::ShapeMismatch { op: "affine", left: sx, right: sw });
        }
        if sb.rows != 1 || sb.cols != sw.cols {
            return Err(DiffError::ShapeMismatch { op: "affine(bias)", left: sw, right: sb });
        }
        let (m, k, n) = (sx.rows, sx.cols, sw.cols);
        let mut out = Vec::with_capacity(m * n);
        let bias = self.nodes[b.0].value.data();
        for _ in 0..m {
            out.extend_from_slice(bias);
        }
        gemm::mm(m, k, n, self.nodes[x.0].value.data(), self.nodes[w.0].value.data(), &mut out, true);
        let out = Tensor::new(m, n, out)?;
        self.record("affine", out, &[x, w, b], Op::Affine { x, w, b })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, DiffError> {
        self.unary_map("relu", x, |a| if a > 0.0 { a } else { 0.0 }, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, DiffError> {
        self.unary_map("tanh", x, f64::tanh, Op::Tanh(x))
    }

    /// Elementwise square root; the derivative at exactly 0 is taken as 0.
    pub fn sqrt(&mut self, x: Var) -> Result<Var, DiffError> {
        self.unary_map("sqrt", x, f64::sqrt, Op::Sqrt(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary_map("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary_map("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary_map("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn square(&mut self, x: Var) -> Result<Var, DiffError> {
        self.unary_map("square", x, |a| a * a, Op::Square(x))
    }

    pub fn neg(&mut self, x: Var) -> Result<Var, DiffError> {
        self.unary_map("neg", x, |a| -a, Op::Neg(x))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, DiffError> {
        self.unary_map("scale", x, |a| a * c, Op::Scale(x, c))
    }

    /// Per-column `x[:, j] * scale[j] + shift[j]`.
    pub fn col_affine(&mut self, x: Var, scale: &[f64], shift: &[f64]) -> Result<Var, DiffError> {
        let s = self.shape(x);
        if scale.len() != s.cols || shift.len() != s.cols {
            return Err(DiffError::ShapeMismatch {
                op: "col_affine",
                left: s,
                right: Shape::new(1, scale.len().min(shift.len())),
            });
        }
        let xv = self.nodes[x.0].value.data();
        let data = xv
            .chunks(s.cols)
            .flat_map(|row| row.iter().zip(scale).zip(shift).map(|((&a, &c), &d)| a * c + d))
            .collect();
        let out = Tensor::new(s.rows, s.cols, data)?;
        self.record("col_affine", out, &[x], Op::ColAffine { x, scale: scale.to_vec() })
    }

    fn reduce_last(&mut self, name: &'static str, x: Var, f: impl Fn(&[f64]) -> f64, op: Op) -> Result<Var, DiffError> {
        let s = self.shape(x);
        let data = self.nodes[x.0].value.data().chunks(s.cols).map(f).collect();
        let out = Tensor::new(s.rows, 1, data)?;
        self.record(name, out, &[x], op)
    }

    pub fn mean_last(&mut self, x: Var) -> Result<Var, DiffError> {
        let n = self.shape(x).cols as f64;
        self.reduce_last("mean_last", x, |r| r.iter().sum::<f64>() / n, Op::MeanLast(x))
    }

    pub fn sum_last(&mut self, x: Var) -> Result<Var, DiffError> {
        self.reduce_last("sum_last", x, |r| r.iter().sum(), Op::SumLast(x))
    }

    /// Row-wise maximum. The argmax (lowest index on ties) is recorded and
    /// receives the entire upstream gradient.
    pub fn max_last(&mut self, x: Var) -> Result<Var, DiffError> {
        let s = self.shape(x);
        let xv = self.nodes[x.0].value.data();
        let mut argmax = Vec::with_capacity(s.rows);
        let mut data = Vec::with_capacity(s.rows);
        for row in xv.chunks(s.cols) {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            argmax.push(best);
            data.push(row[best]);
        }
        let out = Tensor::new(s.rows, 1, data)?;
        self.record("max_last", out, &[x], Op::MaxLast { x, argmax })
    }

    pub fn argmax_of(&self, v: Var) -> Option<&[usize]> {
        match &self.nodes[v.0].op {
            Op::MaxLast { argmax, .. } => Some(argmax),
            _ => None,
        }
    }

    /// Sum of all elements, as a 1×1 tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var, DiffError> {
        let total = self.nodes[x.0].value.data().iter().sum();
        self.record("sum", Tensor::scalar(total), &[x], Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, DiffError> {
        let n = self.shape(x).len() as f64;
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n)
    }

    /// Concatenates along the feature axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let first = *parts.first().ok_or(DiffError::EmptyConcat)?;
        let rows = self.shape(first).rows;
        for &p in &parts[1..] {
            let sp = self.shape(p);
            if sp.rows != rows {
                return Err(DiffError::ShapeMismatch { op: "concat", left: self.shape(first), right: sp });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.nodes[p.0].value.row(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        self.record("concat", out, parts, Op::Concat(parts.to_vec()))
    }

    /// Hash of every piecewise-linear branch taken on this tape: relu signs
    /// and max argmaxes. Two evaluations with equal signatures lie on the
    /// same smooth piece.
    pub fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for &a in self.nodes[x.0].value.data() {
                        (a > 0.0).hash(&mut h);
                    }
                }
                Op::Sqrt(x) => {
                    for &a in self.nodes[x.0].value.data() {
                        (a > 0.0).hash(&mut h);
                    }
                }
                Op::MaxLast { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    /// Reverse pass from a scalar `loss`. Every node that requires a
    /// gradient ends up with one, zero-filled if unreached.
    pub fn backward(&mut self, loss: Var) -> Result<(), DiffError> {
        if self.backward_done {
            return Err(DiffError::BackwardTwice);
        }
        let ls = self.shape(loss);
        if !ls.is_scalar() {
            return Err(DiffError::NotScalar { shape: ls });
        }
        self.backward_done = true;
        for node in &mut self.nodes {
            node.grad = node.requires_grad.then(|| vec![0.0; node.value.shape().len()]);
        }
        if let Some(g) = self.nodes[loss.0].grad.as_mut() {
            g[0] = 1.0;
        }
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let upstream = self.nodes[i].grad.take().expect("grad allocated");
            self.propagate(i, &upstream);
            self.nodes[i].grad = Some(upstream);
        }
        Ok(())
    }

    fn grad_mut(&mut self, v: Var) -> Option<&mut Vec<f64>> {
        let n = &mut self.nodes[v.0];
        if n.requires_grad {
            n.grad.as_mut()
        } else {
            None
        }
    }

    fn accumulate(&mut self, v: Var, f: impl Fn(usize) -> f64) {
        if let Some(g) = self.grad_mut(v) {
            for (i, gi) in g.iter_mut().enumerate() {
                *gi += f(i);
            }
        }
    }

    fn propagate(&mut self, i: usize, up: &[f64]) {
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let sx = self.shape(x);
                let sw = self.shape(w);
                let (m, k, n) = (sx.rows, sx.cols, sw.cols);
                if self.requires_grad(x) {
                    let wv = self.nodes[w.0].value.data().to_vec();
                    let gx = self.grad_mut(x).expect("x grad");
                    gemm::mm_bt(m, n, k, up, &wv, gx);
                }
                if self.requires_grad(w) {
                    let xv = self.nodes[x.0].value.data().to_vec();
                    let gw = self.grad_mut(w).expect("w grad");
                    gemm::mm_at(k, m, n, &xv, up, gw);
                }
                if let Some(gb) = self.grad_mut(b) {
                    for row in up.chunks(n) {
                        for (g, u) in gb.iter_mut().zip(row) {
                            *g += u;
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.nodes[x.0].value.data().to_vec();
                self.accumulate(x, |j| if xv[j] > 0.0 { up[j] } else { 0.0 });
            }
            Op::Tanh(x) => {
                let y = self.nodes[i].value.data().to_vec();
                self.accumulate(x, |j| up[j] * (1.0 - y[j] * y[j]));
            }
            Op::Sqrt(x) => {
                let y = self.nodes[i].value.data().to_vec();
                self.accumulate(x, |j| if y[j] > 0.0 { up[j] / (2.0 * y[j]) } else { 0.0 });
            }
            Op::Add(a, b) => {
                self.accumulate(a, |j| up[j]);
                self.accumulate(b, |j| up[j]);
            }
            Op::Sub(a, b) => {
                self.accumulate(a, |j| up[j]);
                self.accumulate(b, |j| -up[j]);
            }
            Op::Mul(a, b) => {
                let av = self.nodes[a.0].value.data().to_vec();
                let bv = self.nodes[b.0].value.data().to_vec();
                self.accumulate(a, |j| up[j] * bv[j]);
                self.accumulate(b, |j| up[j] * av[j]);
            }
            Op::Square(x) => {
                let xv = self.nodes[x.0].value.data().to_vec();
                self.accumulate(x, |j| 2.0 * xv[j] * up[j]);
            }
            Op::Neg(x) => self.accumulate(x, |j| -up[j]),
            Op::Scale(x, c) => self.accumulate(x, |j| c * up[j]),
            Op::ColAffine { x, scale } => {
                let n = scale.len();
                self.accumulate(x, |j| up[j] * scale[j % n]);
            }
            Op::MeanLast(x) => {
                let n = self.shape(x).cols;
                self.accumulate(x, |j| up[j / n] / n as f64);
            }
            Op::SumLast(x) => {
                let n = self.shape(x).cols;
                self.accumulate(x, |j| up[j / n]);
            }
            Op::MaxLast { x, argmax } => {
                let n = self.shape(x).cols;
                self.accumulate(x, |j| if argmax[j / n] == j % n { up[j / n] } else { 0.0 });
            }
            Op::Sum(x) => self.accumulate(x, |_| up[0]),
            Op::Concat(parts) => {
                let total = self.shape(Var(i)).cols;
                let mut offset = 0;
                for p in parts {
                    let c = self.shape(p).cols;
                    self.accumulate(p, |j| up[(j / c) * total + offset + j % c]);
                    offset += c;
                }
            }
        }
    }

    /// Adds the gradient recorded for `p` into `p`'s own gradient buffer.
    /// Returns false when `p` was not bound as a trainable node.
    pub fn collect_grad(&self, p: &mut Param) -> bool {
        match self.param_var(p.id()).and_then(|v| self.grad(v)) {
            Some(g) => {
                p.add_grad(g);
                true
            }
            None => false,
        }
    }
}
