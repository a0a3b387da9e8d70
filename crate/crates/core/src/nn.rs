//! Dense layers, MLPs with Lipschitz tracking, and the Adam optimizer.

use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, Matrix};
use crate::math;
use crate::rng::normal_matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    #[default]
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    /// Global Lipschitz constant of the scalar map.
    pub fn lipschitz(self) -> f64 {
        match self {
            Activation::Identity | Activation::Relu | Activation::Tanh => 1.0,
            Activation::Sigmoid => 0.25,
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => math::tanh(x),
            Activation::Sigmoid => math::sigmoid(x),
        }
    }

    pub fn apply(self, x: &Matrix) -> Matrix {
        match self {
            Activation::Identity => x.clone(),
            _ => x.map(|v| self.eval(v)),
        }
    }

    pub fn on_tape(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

/// Affine map `x W + b` (`W` is `in x out`, `b` is `1 x out`) followed by an
/// activation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Option<Matrix>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Stack of dense layers.
///
/// When `lipschitz_cap` is set, [`Mlp::enforce_lipschitz`] rescales every
/// weight whose operator norm exceeds the cap, and the declared Lipschitz
/// bound is the product of the per-layer caps and activation constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub lipschitz_cap: Option<f64>,
}

/// Power-iteration steps used when estimating a weight's operator norm.
pub const POWER_ITERS: usize = 20;

impl Mlp {
    /// Layer widths `dims[0] -> dims[1] -> ...`; `hidden` is applied after
    /// every layer but the last, which uses `output`. Weights are drawn from
    /// `N(0, 2 / (in + out))`, biases start at zero.
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        bias: bool,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument("an MLP needs at least two positive widths"));
        }
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (a, b) = (dims[i], dims[i + 1]);
                DenseLayer {
                    weight: normal_matrix(rng, a, b, math::sqrt(2.0 / (a + b) as f64)),
                    bias: bias.then(|| Matrix::zeros(1, b)),
                    activation: if i + 1 == n { output } else { hidden },
                }
            })
            .collect();
        Ok(Self { layers, lipschitz_cap: None })
    }

    /// A single linear layer `x W + b`.
    pub fn linear(weight: Matrix, bias: Option<Matrix>) -> Self {
        Self { layers: alloc::vec![DenseLayer { weight, bias, activation: Activation::Identity }], lipschitz_cap: None }
    }

    pub fn with_lipschitz_cap(mut self, cap: f64) -> Self {
        self.lipschitz_cap = Some(cap);
        self.enforce_lipschitz();
        self
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::ShapeMismatch { op: "mlp", lhs: w[0].weight.shape(), rhs: w[1].weight.shape() });
            }
        }
        for l in &self.layers {
            if let Some(b) = &l.bias {
                if b.shape() != (1, l.out_dim()) {
                    return Err(Error::ShapeMismatch { op: "mlp bias", lhs: (1, l.out_dim()), rhs: b.shape() });
                }
            }
        }
        Ok(())
    }

    /// Row-wise application to an `n x in` input.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::ShapeMismatch { op: "mlp_apply", lhs: (x.rows(), self.in_dim()), rhs: x.shape() });
        }
        let mut h = x.clone();
        for l in &self.layers {
            h = h.matmul(&l.weight);
            if let Some(b) = &l.bias {
                for i in 0..h.rows() {
                    for (o, &c) in h.row_mut(i).iter_mut().zip(b.row(0)) {
                        *o += c;
                    }
                }
            }
            h = l.activation.apply(&h);
        }
        Ok(h)
    }

    /// Scalar-to-scalar evaluation for width-1 MLPs.
    pub fn eval_scalar(&self, x: f64) -> f64 {
        let m = Matrix::from_vec(1, 1, alloc::vec![x]).unwrap();
        self.apply(&m).map(|o| o.get(0, 0)).unwrap_or(f64::NAN)
    }

    /// Registers parameters on the tape in [`Mlp::parameters`] order.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(tape.param(l.weight.clone()));
            if let Some(b) = &l.bias {
                out.push(tape.param(b.clone()));
            }
        }
        out
    }

    /// Forward pass on the tape using variables from [`Mlp::register`].
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        let mut k = 0;
        for l in &self.layers {
            h = tape.matmul(h, vars[k])?;
            k += 1;
            if l.bias.is_some() {
                h = tape.add_row(h, vars[k])?;
                k += 1;
            }
            h = l.activation.on_tape(tape, h);
        }
        Ok(h)
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.weight);
            if let Some(b) = &l.bias {
                out.push(b);
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            if let Some(b) = &mut l.bias {
                out.push(b);
            }
        }
        out
    }

    /// Scales down every weight whose estimated operator norm exceeds the cap.
    pub fn enforce_lipschitz(&mut self) {
        let Some(cap) = self.lipschitz_cap else { return };
        for l in &mut self.layers {
            let est = power_iteration_norm(&l.weight, POWER_ITERS);
            if est > cap {
                // Shrink slightly past the cap to absorb the estimate's error.
                l.weight = l.weight.scale(cap / (est * (1.0 + 1e-4)));
            }
        }
    }

    /// Product of exact weight operator norms and activation constants; an
    /// upper bound on the Lipschitz constant of the whole map.
    pub fn lipschitz_bound(&self) -> f64 {
        self.layers.iter().map(|l| l.weight.operator_norm() * l.activation.lipschitz()).product()
    }

    /// Lipschitz bound promised by the cap, or `None` without one.
    pub fn declared_lipschitz(&self) -> Option<f64> {
        let cap = self.lipschitz_cap?;
        Some(self.layers.iter().map(|l| cap * l.activation.lipschitz()).product())
    }
}

/// Largest singular value estimated by power iteration on `W^T W`.
pub fn power_iteration_norm(w: &Matrix, iters: usize) -> f64 {
    let n = w.cols();
    if n == 0 || w.rows() == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) * 1e-3).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut sigma = 0.0;
    for _ in 0..iters.max(1) {
        let wv = w.mul_vec(&v);
        let mut next = alloc::vec![0.0; n];
        for (i, &a) in wv.iter().enumerate() {
            for (o, &b) in next.iter_mut().zip(w.row(i)) {
                *o += a * b;
            }
        }
        let nn = norm2(&next);
        if nn == 0.0 {
            return 0.0;
        }
        sigma = math::sqrt(nn);
        v = next.into_iter().map(|x| x / nn).collect();
    }
    let wv = w.mul_vec(&v);
    sigma.max(math::sqrt(dot(&wv, &wv)))
}

/// `-[y log σ(x) + (1 - y) log(1 - σ(x))]` as `y softplus(-x) + (1 - y) softplus(x)`.
#[inline]
pub fn bce_term(x: f64, y: f64) -> f64 {
    y * math::softplus(-x) + (1.0 - y) * math::softplus(x)
}

/// Mean binary cross-entropy for logits, evaluated without a tape.
pub fn bce_with_logits(logits: &Matrix, labels: &Matrix) -> Result<f64> {
    if logits.shape() != labels.shape() {
        return Err(Error::ShapeMismatch { op: "bce_with_logits", lhs: logits.shape(), rhs: labels.shape() });
    }
    let n = logits.data().len().max(1) as f64;
    Ok(logits.data().iter().zip(labels.data()).map(|(&x, &y)| bce_term(x, y)).sum::<f64>() / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub step_count: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step_count: 0, first: Vec::new(), second: Vec::new() }
    }

    /// Gradient-descent update of `params` in place.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::LengthMismatch { expected: params.len(), got: grads.len() });
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(Error::LengthMismatch { expected: self.first.len(), got: params.len() });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.shape() != g.shape() || m.shape() != g.shape() {
                return Err(Error::ShapeMismatch { op: "adam_step", lhs: p.shape(), rhs: g.shape() });
            }
        }
        self.step_count += 1;
        let c = self.config;
        let bc1 = 1.0 - math::powf(c.beta1, self.step_count as f64);
        let bc2 = 1.0 - math::powf(c.beta2, self.step_count as f64);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i].data();
            let m = self.first[i].data_mut();
            for (mi, &gi) in m.iter_mut().zip(g) {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
            }
            let v = self.second[i].data_mut();
            for (vi, &gi) in v.iter_mut().zip(g) {
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
            }
            let (m, v) = (self.first[i].data(), self.second[i].data());
            for ((x, &mi), &vi) in p.data_mut().iter_mut().zip(m).zip(v) {
                *x -= c.lr * (mi / bc1) / (math::sqrt(vi / bc2) + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn identity_linear_layer() {
        let m = Mlp::linear(Matrix::identity(3), None);
        let x = Matrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64);
        assert_eq!(m.apply(&x).unwrap(), x);
    }

    #[test]
    fn zero_weights_give_bias_chain() {
        let mut rng = seeded(2);
        let mut m = Mlp::new(&mut rng, &[3, 4, 2], Activation::Tanh, Activation::Identity, true).unwrap();
        for l in &mut m.layers {
            l.weight = Matrix::zeros(l.in_dim(), l.out_dim());
        }
        m.layers[0].bias = Some(Matrix::from_rows(&[&[0.5, 0.0, -0.5, 1.0]]));
        m.layers[1].bias = Some(Matrix::from_rows(&[&[2.0, -3.0]]));
        let out = m.apply(&normal_matrix(&mut rng, 5, 3, 1.0)).unwrap();
        for i in 0..5 {
            assert_eq!(out.row(i), &[2.0, -3.0]);
        }
    }

    #[test]
    fn constrained_tanh_mlp_is_one_lipschitz() {
        let mut rng = seeded(3);
        let m = Mlp::new(&mut rng, &[1, 32, 1], Activation::Tanh, Activation::Identity, true)
            .unwrap()
            .with_lipschitz_cap(1.0);
        assert!(m.lipschitz_bound() <= 1.0 + 1e-12);
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let a: f64 = rng.gen_range(-5.0..5.0);
            let b: f64 = rng.gen_range(-5.0..5.0);
            if a != b {
                worst = worst.max((m.eval_scalar(a) - m.eval_scalar(b)).abs() / (a - b).abs());
            }
        }
        assert!(worst <= 1.0 + 1e-6, "{worst}");
    }

    #[test]
    fn power_iteration_agrees_with_svd() {
        let mut rng = seeded(4);
        let w = normal_matrix(&mut rng, 6, 4, 1.0);
        let est = power_iteration_norm(&w, 200);
        assert!((est - w.operator_norm()).abs() < 1e-6 * w.operator_norm());
    }

    #[test]
    fn adam_examples() {
        let mut p = Matrix::from_rows(&[&[1.0, -2.0]]);
        let mut adam = Adam::new(AdamConfig { lr: 0.1, ..Default::default() });
        adam.step(&mut [&mut p], &[Matrix::zeros(1, 2)]).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);

        let mut p = Matrix::zeros(1, 1);
        let mut adam = Adam::new(AdamConfig { lr: 0.01, ..Default::default() });
        adam.step(&mut [&mut p], &[Matrix::from_rows(&[&[3.0]])]).unwrap();
        // m̂ = g, v̂ = g², so the first move is lr * g / (|g| + eps).
        assert!((p.get(0, 0) + 0.01 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
        for _ in 0..100 {
            adam.step(&mut [&mut p], &[Matrix::from_rows(&[&[3.0]])]).unwrap();
        }
        assert!(p.get(0, 0) < -0.5);
    }

    #[test]
    fn bce_overflow_free() {
        let v = bce_with_logits(&Matrix::from_rows(&[&[50.0]]), &Matrix::from_rows(&[&[1.0]])).unwrap();
        assert!(v > 0.0 && v < 1e-21);
        let v = bce_with_logits(&Matrix::from_rows(&[&[0.0]]), &Matrix::from_rows(&[&[1.0]])).unwrap();
        assert!((v - core::f64::consts::LN_2).abs() < 1e-15);
    }
}
