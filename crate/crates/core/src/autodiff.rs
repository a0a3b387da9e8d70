//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation eagerly; values are computed at
//! construction and shape errors surface there. [`Tape::backward`] then walks
//! the records in reverse and accumulates gradients for every node that
//! depends on a leaf created with `requires_grad`.
//!
//! The derivative of `relu` at exactly 0 is taken to be 0.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::CsrPattern;
use crate::linalg::Matrix;
use crate::math;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    RowL2Norm(Var),
    ConcatCols(Var, Var),
    GatherRows(Var, Arc<Vec<usize>>),
    RowDot(Var, Var),
    SpMM(Arc<CsrPattern>, Var, Var),
    Sum(Var),
    Mean(Var),
    BceWithLogits(Var, Arc<Matrix>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Records values and operations for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::ShapeMismatch { op, lhs: a.shape(), rhs: b.shape() }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable input.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Gradient of the last [`Tape::backward`] root with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.rows() {
            return Err(shape_err("matmul", x, y));
        }
        let v = x.matmul(y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err(op, x, y));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).add(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).sub(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let v = self.value(a).hadamard(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Hadamard(a, b), rg))
    }

    /// `x + 1 b` for an `n x m` matrix `x` and a `1 x m` row `b`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape_err("add_row", xv, bv));
        }
        let mut v = xv.clone();
        for i in 0..v.rows() {
            for (o, &c) in v.row_mut(i).iter_mut().zip(bv.row(0)) {
                *o += c;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(v, Op::AddRow(x, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        let rg = self.rg(a);
        self.push(v, Op::AddScalar(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.rg(a);
        self.push(v, Op::Relu(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(math::tanh);
        let rg = self.rg(a);
        self.push(v, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(math::sigmoid);
        let rg = self.rg(a);
        self.push(v, Op::Sigmoid(a), rg)
    }

    /// `n x 1` column of Euclidean row norms.
    pub fn row_l2_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Matrix::from_fn(x.rows(), 1, |i, _| crate::linalg::norm2(x.row(i)));
        let rg = self.rg(a);
        self.push(v, Op::RowL2Norm(a), rg)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rows() != y.rows() {
            return Err(shape_err("concat_cols", x, y));
        }
        let v = x.hcat(y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::ConcatCols(a, b), rg))
    }

    /// Rows `idx[0], idx[1], ...` of `a`, repeats allowed.
    pub fn gather_rows(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::IndexOutOfRange { index: bad, len: x.rows() });
        }
        let v = x.select_rows(&idx);
        let rg = self.rg(a);
        Ok(self.push(v, Op::GatherRows(a, idx), rg))
    }

    /// `n x 1` column of row-wise inner products.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("row_dot", a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let v = Matrix::from_fn(x.rows(), 1, |i, _| crate::linalg::dot(x.row(i), y.row(i)));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::RowDot(a, b), rg))
    }

    /// `S x` where `S` has the given pattern and entry values `w` (`nnz x 1`,
    /// in storage order).
    pub fn spmm(&mut self, pattern: Arc<CsrPattern>, w: Var, x: Var) -> Result<Var> {
        let (wv, xv) = (self.value(w), self.value(x));
        if wv.shape() != (pattern.nnz(), 1) {
            return Err(Error::ShapeMismatch { op: "spmm", lhs: (pattern.nnz(), 1), rhs: wv.shape() });
        }
        if xv.rows() != pattern.cols {
            return Err(Error::ShapeMismatch { op: "spmm", lhs: (pattern.rows, pattern.cols), rhs: xv.shape() });
        }
        let f = xv.cols();
        let mut out = Matrix::zeros(pattern.rows, f);
        let wd = wv.data();
        for u in 0..pattern.rows {
            let orow = out.row_mut(u);
            for k in pattern.row_ptr[u]..pattern.row_ptr[u + 1] {
                let a = wd[k];
                for (o, &b) in orow.iter_mut().zip(xv.row(pattern.col_idx[k])) {
                    *o += a * b;
                }
            }
        }
        let rg = self.rg(w) || self.rg(x);
        Ok(self.push(out, Op::SpMM(pattern, w, x), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Matrix::from_vec(1, 1, vec![self.value(a).data().iter().sum()]).unwrap();
        let rg = self.rg(a);
        self.push(v, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let n = x.data().len().max(1) as f64;
        let v = Matrix::from_vec(1, 1, vec![x.data().iter().sum::<f64>() / n]).unwrap();
        let rg = self.rg(a);
        self.push(v, Op::Mean(a), rg)
    }

    /// Mean binary cross-entropy of `logits` against 0/1 `labels`, in the
    /// overflow-free form `y softplus(-x) + (1 - y) softplus(x)`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: Arc<Matrix>) -> Result<Var> {
        let x = self.value(logits);
        if x.shape() != labels.shape() {
            return Err(shape_err("bce_with_logits", x, &labels));
        }
        let n = x.data().len().max(1) as f64;
        let total: f64 = x.data().iter().zip(labels.data()).map(|(&z, &y)| crate::nn::bce_term(z, y)).sum();
        let v = Matrix::from_vec(1, 1, vec![total / n]).unwrap();
        let rg = self.rg(logits);
        Ok(self.push(v, Op::BceWithLogits(logits, labels), rg))
    }

    /// Reverse pass from a `1 x 1` root. Replaces any earlier gradients.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let rv = self.value(root);
        if rv.shape() != (1, 1) {
            return Err(Error::ShapeMismatch { op: "backward", lhs: (1, 1), rhs: rv.shape() });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Matrix::from_vec(1, 1, vec![1.0]).unwrap());
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let mut acc = |v: Var, d: Matrix| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign_scaled(&d, 1.0),
                slot => *slot = Some(d),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    acc(*a, g.matmul_t(bv));
                }
                if self.rg(*b) {
                    acc(*b, av.t_matmul(g));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::Hadamard(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    acc(*a, g.hadamard(bv));
                }
                if self.rg(*b) {
                    acc(*b, g.hadamard(av));
                }
            }
            Op::AddRow(x, b) => {
                acc(*x, g.clone());
                if self.rg(*b) {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &v) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(*b, db);
                }
            }
            Op::Scale(a, s) => acc(*a, g.scale(*s)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Relu(a) => {
                let x = self.value(*a);
                let d = Matrix::from_fn(x.rows(), x.cols(), |r, c| if x.get(r, c) > 0.0 { g.get(r, c) } else { 0.0 });
                acc(*a, d);
            }
            Op::Tanh(a) => {
                let y = &node.value;
                let d = Matrix::from_fn(y.rows(), y.cols(), |r, c| g.get(r, c) * (1.0 - y.get(r, c) * y.get(r, c)));
                acc(*a, d);
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let d = Matrix::from_fn(y.rows(), y.cols(), |r, c| g.get(r, c) * y.get(r, c) * (1.0 - y.get(r, c)));
                acc(*a, d);
            }
            Op::RowL2Norm(a) => {
                let x = self.value(*a);
                let nrm = &node.value;
                // Zero rows get the zero subgradient.
                let d = Matrix::from_fn(x.rows(), x.cols(), |r, c| {
                    let n = nrm.get(r, 0);
                    if n > 0.0 {
                        g.get(r, 0) * x.get(r, c) / n
                    } else {
                        0.0
                    }
                });
                acc(*a, d);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                if self.rg(*a) {
                    acc(*a, Matrix::from_fn(g.rows(), ca, |r, c| g.get(r, c)));
                }
                if self.rg(*b) {
                    acc(*b, Matrix::from_fn(g.rows(), cb, |r, c| g.get(r, ca + c)));
                }
            }
            Op::GatherRows(a, idx) => {
                let x = self.value(*a);
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for (r, &src) in idx.iter().enumerate() {
                    for (o, &v) in d.row_mut(src).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                acc(*a, d);
            }
            Op::RowDot(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    acc(*a, Matrix::from_fn(av.rows(), av.cols(), |r, c| g.get(r, 0) * bv.get(r, c)));
                }
                if self.rg(*b) {
                    acc(*b, Matrix::from_fn(bv.rows(), bv.cols(), |r, c| g.get(r, 0) * av.get(r, c)));
                }
            }
            Op::SpMM(pattern, w, x) => {
                let (wv, xv) = (self.value(*w), self.value(*x));
                let wd = wv.data();
                if self.rg(*w) {
                    let mut dw = Matrix::zeros(pattern.nnz(), 1);
                    for u in 0..pattern.rows {
                        for k in pattern.row_ptr[u]..pattern.row_ptr[u + 1] {
                            dw.data_mut()[k] = crate::linalg::dot(g.row(u), xv.row(pattern.col_idx[k]));
                        }
                    }
                    acc(*w, dw);
                }
                if self.rg(*x) {
                    let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                    for u in 0..pattern.rows {
                        for k in pattern.row_ptr[u]..pattern.row_ptr[u + 1] {
                            let a = wd[k];
                            for (o, &v) in dx.row_mut(pattern.col_idx[k]).iter_mut().zip(g.row(u)) {
                                *o += a * v;
                            }
                        }
                    }
                    acc(*x, dx);
                }
            }
            Op::Sum(a) => {
                let x = self.value(*a);
                let s = g.get(0, 0);
                acc(*a, Matrix::from_fn(x.rows(), x.cols(), |_, _| s));
            }
            Op::Mean(a) => {
                let x = self.value(*a);
                let s = g.get(0, 0) / (x.data().len().max(1) as f64);
                acc(*a, Matrix::from_fn(x.rows(), x.cols(), |_, _| s));
            }
            Op::BceWithLogits(a, labels) => {
                let x = self.value(*a);
                let s = g.get(0, 0) / (x.data().len().max(1) as f64);
                acc(
                    *a,
                    Matrix::from_fn(x.rows(), x.cols(), |r, c| s * (math::sigmoid(x.get(r, c)) - labels.get(r, c))),
                );
            }
        }
    }
}

/// Worst entrywise disagreement between tape gradients and central
/// differences with step `step`, measured as `|a - n| / max(|a|, |n|, floor)`.
/// `f` builds a scalar from leaves holding `inputs`.
pub fn gradient_check<F>(inputs: &[Matrix], step: f64, floor: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|m| tape.constant(m.clone())).collect();
        let root = f(&mut tape, &vars)?;
        Ok(tape.value(root).get(0, 0))
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let root = f(&mut tape, &vars)?;
    tape.backward(root)?;
    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let zero = Matrix::zeros(input.rows(), input.cols());
        let analytic = tape.grad(vars[k]).unwrap_or(&zero).clone();
        for idx in 0..input.data().len() {
            let x0 = input.data()[idx];
            probe[k].data_mut()[idx] = x0 + step;
            let up = eval(&probe)?;
            probe[k].data_mut()[idx] = x0 - step;
            let down = eval(&probe)?;
            probe[k].data_mut()[idx] = x0;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data()[idx];
            let err = math::abs(a - numeric) / math::abs(a).max(math::abs(numeric)).max(floor);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_matrix, seeded};

    #[test]
    fn square_norm_gradient() {
        let mut rng = seeded(1);
        let x = normal_matrix(&mut rng, 5, 1, 1.0);
        let mut t = Tape::new();
        let xv = t.param(x.clone());
        let xt = t.param(x.transpose());
        let y = t.matmul(xt, xv).unwrap();
        t.backward(y).unwrap();
        let g = t.grad(xv).unwrap().add(&t.grad(xt).unwrap().transpose());
        assert!(g.sub(&x.scale(2.0)).max_abs() < 1e-12);
    }

    #[test]
    fn relu_at_zero_has_zero_gradient() {
        let mut t = Tape::new();
        let x = t.param(Matrix::from_rows(&[&[0.0, 1.0, -1.0]]));
        let r = t.relu(x);
        let s = t.sum(r);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn shape_errors_at_construction() {
        let mut t = Tape::new();
        let a = t.param(Matrix::zeros(2, 3));
        let b = t.param(Matrix::zeros(2, 3));
        assert!(t.matmul(a, b).is_err());
        let bias = t.param(Matrix::zeros(1, 2));
        assert!(t.add_row(a, bias).is_err());
        assert!(t.backward(a).is_err());
    }

    #[test]
    fn bce_values() {
        let mut t = Tape::new();
        let x = t.param(Matrix::from_rows(&[&[0.0], &[50.0]]));
        let loss = t.bce_with_logits(x, Arc::new(Matrix::from_rows(&[&[1.0], &[1.0]]))).unwrap();
        let v = t.value(loss).get(0, 0);
        assert!((v - core::f64::consts::LN_2 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(Matrix::identity(2));
        let p = t.param(Matrix::identity(2));
        let m = t.matmul(c, p).unwrap();
        let s = t.sum(m);
        t.backward(s).unwrap();
        assert!(t.grad(c).is_none());
        assert!(t.grad(p).is_some());
    }
}
