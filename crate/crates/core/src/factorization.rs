//! Positional encodings from low-rank factorization of a log-sigmoid
//! objective, with LINE and DeepWalk target matrices.
//!
//! The objective over `M = Z' Z^T` is
//! `Σ_uv f₊(u,v) g(M_uv) + f₋(u,v) g(-M_uv)` with `g` the log-sigmoid. It
//! is maximized with Adam; the encoding is then read off as the top right
//! singular vectors of the optimal `M`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{degree_info, normalized_adjacency, Graph, SelfLoops};
use crate::linalg::Matrix;
use crate::math;
use crate::nn::{Adam, AdamConfig};
use crate::rng::{normal_matrix, seeded};
use crate::spectral::normalize_signs;

/// `log σ(x) = x - log(1 + e^x)`, evaluated without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    if x <= 0.0 {
        x - math::ln1p(math::exp(x))
    } else {
        -math::ln1p(math::exp(-x))
    }
}

/// Largest graph accepted by [`deepwalk_targets`] (the target is dense).
pub const MAX_DEEPWALK_NODES: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TargetKind {
    Line,
    DeepWalk { window: usize },
}

/// Positive and negative target matrices of the objective.
#[derive(Debug, Clone)]
pub struct FactorizationObjective {
    pub f_plus: Matrix,
    pub f_minus: Matrix,
    pub c: f64,
    pub kind: TargetKind,
}

impl FactorizationObjective {
    pub fn n(&self) -> usize {
        self.f_plus.rows()
    }

    /// Objective at `M`.
    pub fn value(&self, m: &Matrix) -> f64 {
        let mut s = 0.0;
        for ((&x, &fp), &fm) in m.data().iter().zip(self.f_plus.data()).zip(self.f_minus.data()) {
            if fp != 0.0 {
                s += fp * log_sigmoid(x);
            }
            if fm != 0.0 {
                s += fm * log_sigmoid(-x);
            }
        }
        s
    }

    /// Gradient with respect to `M`: `f₊ ⊙ σ(-M) - f₋ ⊙ σ(M)`.
    pub fn gradient(&self, m: &Matrix) -> Matrix {
        let data = m
            .data()
            .iter()
            .zip(self.f_plus.data())
            .zip(self.f_minus.data())
            .map(|((&x, &fp), &fm)| fp * math::sigmoid(-x) - fm * math::sigmoid(x))
            .collect();
        Matrix::from_vec(m.rows(), m.cols(), data).unwrap()
    }

    /// Entrywise maximizer `log(f₊ / f₋)` where both targets are positive,
    /// `None` elsewhere (the supremum is then approached at `±∞` or the entry
    /// does not matter).
    pub fn entrywise_optimum(&self) -> Vec<Option<f64>> {
        self.f_plus
            .data()
            .iter()
            .zip(self.f_minus.data())
            .map(|(&fp, &fm)| (fp > 0.0 && fm > 0.0).then(|| math::ln(fp / fm)))
            .collect()
    }

    /// Supremum of the objective over unconstrained `M`, entry by entry.
    pub fn supremum(&self) -> f64 {
        self.f_plus
            .data()
            .iter()
            .zip(self.f_minus.data())
            .map(|(&fp, &fm)| {
                if fp > 0.0 && fm > 0.0 {
                    let t = fp + fm;
                    fp * math::ln(fp / t) + fm * math::ln(fm / t)
                } else {
                    0.0
                }
            })
            .sum()
    }
}

fn degrees(g: &Graph, policy: SelfLoops) -> Result<Vec<f64>> {
    Ok(degree_info(g, policy)?.degrees)
}

/// Default `c`: `1 / N`.
pub fn default_c(g: &Graph) -> f64 {
    1.0 / g.num_nodes().max(1) as f64
}

/// LINE: `f₊ = A`, `f₋ = c 1 1^T D^{3/4}`. Isolated nodes get a unit
/// self-loop first.
pub fn line_targets(g: &Graph, c: f64) -> Result<FactorizationObjective> {
    if g.num_nodes() == 0 {
        return Err(Error::InvalidArgument("graph is empty"));
    }
    if c <= 0.0 {
        return Err(Error::InvalidArgument("c must be positive"));
    }
    let a = normalized_adjacency(g, SelfLoops::PadIsolated)?.pattern();
    let n = g.num_nodes();
    let mut f_plus = Matrix::zeros(n, n);
    for u in 0..n {
        for &v in &a.col_idx[a.row_ptr[u]..a.row_ptr[u + 1]] {
            f_plus.set(u, v, 1.0);
        }
    }
    let d = degrees(g, SelfLoops::PadIsolated)?;
    let col: Vec<f64> = d.iter().map(|&x| c * math::powf(x, 0.75)).collect();
    let f_minus = Matrix::from_fn(n, n, |_, v| col[v]);
    Ok(FactorizationObjective { f_plus, f_minus, c, kind: TargetKind::Line })
}

/// DeepWalk: `f₊ = Σ_{k=1..T} (D Φ^k + (Φ^k)^T D)` with `Φ = D^{-1} A`,
/// and `f₋ = c D 1 1^T D`.
pub fn deepwalk_targets(g: &Graph, window: usize, c: f64) -> Result<FactorizationObjective> {
    let n = g.num_nodes();
    if !(1..=10).contains(&window) {
        return Err(Error::InvalidArgument("window must lie in 1..=10"));
    }
    if c <= 0.0 {
        return Err(Error::InvalidArgument("c must be positive"));
    }
    if n > MAX_DEEPWALK_NODES {
        return Err(Error::TooLarge { n, max: MAX_DEEPWALK_NODES });
    }
    let d = degrees(g, SelfLoops::Strict)?;
    // power = Φ^k, advanced by one sparse left-multiplication per step.
    let mut power = Matrix::identity(n);
    let mut f_plus = Matrix::zeros(n, n);
    for _ in 0..window {
        let mut next = Matrix::zeros(n, n);
        for u in 0..n {
            let inv = 1.0 / d[u];
            let orow = next.row_mut(u);
            for &w in g.neighbors(u) {
                for (o, &x) in orow.iter_mut().zip(power.row(w)) {
                    *o += inv * x;
                }
            }
        }
        power = next;
        let dp = Matrix::from_fn(n, n, |u, v| d[u] * power.get(u, v));
        f_plus = f_plus.add(&dp).add(&dp.transpose());
    }
    let f_minus = Matrix::from_fn(n, n, |u, v| c * d[u] * d[v]);
    Ok(FactorizationObjective { f_plus, f_minus, c, kind: TargetKind::DeepWalk { window } })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FactorizationConfig {
    pub max_iters: usize,
    pub adam: AdamConfig,
    /// Stop once `‖∇‖_F` over both factors falls below this, times `N`.
    pub grad_tol_per_node: f64,
    /// Replace `Z` by the top right singular vectors of `Z' Z^T`.
    pub orthonormalize: bool,
}

impl Default for FactorizationConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            adam: AdamConfig { lr: 0.05, ..AdamConfig::default() },
            grad_tol_per_node: 1e-5,
            orthonormalize: true,
        }
    }
}

/// Solver output. `z` has orthonormal columns when orthonormalization is on.
#[derive(Debug, Clone)]
pub struct FactorizationPE {
    pub z: Matrix,
    pub z_prime: Matrix,
    /// The right factor as optimized, before orthonormalization.
    pub z_factor: Matrix,
    pub objective_value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Best objective seen after each iteration (index 0 is the start).
    pub best_trace: Vec<f64>,
}

impl FactorizationPE {
    pub fn m_star(&self) -> Matrix {
        self.z_prime.matmul_t(&self.z_factor)
    }
}

/// Factors initialized i.i.d. with variance `1 / √p` from `seed`.
pub fn initial_factors(n: usize, p: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = seeded(seed);
    let std = math::powf(p as f64, -0.25);
    let zp = normal_matrix(&mut rng, n, p, std);
    let z = normal_matrix(&mut rng, n, p, std);
    (zp, z)
}

/// Maximizes the objective over `M = Z' Z^T` with `Z', Z ∈ R^{N x p}`.
pub fn solve_factorization(
    obj: &FactorizationObjective,
    p: usize,
    seed: u64,
    cfg: &FactorizationConfig,
) -> Result<FactorizationPE> {
    let n = obj.n();
    if p == 0 || p > n {
        return Err(Error::BadDimension { p, n });
    }
    let (zp, z) = initial_factors(n, p, seed);
    solve_factorization_from(obj, zp, z, cfg)
}

/// As [`solve_factorization`] from explicit starting factors.
pub fn solve_factorization_from(
    obj: &FactorizationObjective,
    mut zp: Matrix,
    mut z: Matrix,
    cfg: &FactorizationConfig,
) -> Result<FactorizationPE> {
    let n = obj.n();
    if zp.rows() != n || z.shape() != zp.shape() {
        return Err(Error::ShapeMismatch { op: "solve_factorization", lhs: zp.shape(), rhs: z.shape() });
    }
    let mut adam = Adam::new(cfg.adam);
    let tol = cfg.grad_tol_per_node * n as f64;
    let mut m = zp.matmul_t(&z);
    let mut value = obj.value(&m);
    let mut best = (value, zp.clone(), z.clone());
    let mut trace = alloc::vec![value];
    let mut grad_norm;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let gm = obj.gradient(&m);
        let gzp = gm.matmul(&z);
        let gz = gm.t_matmul(&zp);
        let (a, b) = (gzp.frobenius_norm(), gz.frobenius_norm());
        grad_norm = math::sqrt(a * a + b * b);
        if grad_norm < tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iters {
            break;
        }
        // Ascent: hand Adam the negated gradient.
        adam.step(&mut [&mut zp, &mut z], &[gzp.scale(-1.0), gz.scale(-1.0)])?;
        iterations += 1;
        m = zp.matmul_t(&z);
        value = obj.value(&m);
        if value > best.0 {
            best = (value, zp.clone(), z.clone());
        }
        trace.push(best.0);
    }
    if !converged {
        log::warn!("factorization stopped after {iterations} iterations with gradient norm {grad_norm:e}");
        // Fall back to the best iterate seen.
        zp = best.1;
        z = best.2;
        value = best.0;
    }
    let p = z.cols();
    let zfinal = if cfg.orthonormalize {
        let svd = zp.matmul_t(&z).svd();
        let cols: Vec<usize> = (0..p).collect();
        let mut v = svd.v.select_columns(&cols);
        normalize_signs(&mut v);
        v
    } else {
        z.clone()
    };
    Ok(FactorizationPE {
        z: zfinal,
        z_prime: zp,
        z_factor: z,
        objective_value: value,
        iterations,
        grad_norm,
        converged,
        best_trace: trace,
    })
}
