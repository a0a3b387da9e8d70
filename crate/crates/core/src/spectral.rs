//! Spectral tools: canonical symmetric eigendecomposition, Laplacian
//! eigenmaps, eigengap diagnostics, adversarial eigenvector perturbations and
//! the Davis-Kahan eigenspace bound.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{normalized_laplacian, Graph, Permutation, SelfLoops, SparseMatrix};
use crate::linalg::{dot, norm2, symmetric_eigen, tridiagonal_eigen, Matrix};
use crate::math;
use crate::procrustes::sign_match;
use crate::rng::{seeded, standard_normal};

/// Largest asymmetry tolerated by [`symmetric_eig`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Relative tolerance under which consecutive eigenvalues count as equal.
pub const MULTIPLICITY_TOL: f64 = 1e-9;

/// Node count above which only the iterative solver is used.
pub const DEFAULT_DENSE_CUTOFF: usize = 5000;

/// `B = U diag(λ) U^T` with ascending eigenvalues and sign-normalized columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl SpectralDecomposition {
    /// `Σ λ_i u_i u_i^T` over the stored pairs.
    pub fn reconstruct(&self) -> Matrix {
        let scaled = Matrix::from_fn(self.eigenvectors.rows(), self.eigenvectors.cols(), |i, j| {
            self.eigenvectors.get(i, j) * self.eigenvalues[j]
        });
        scaled.matmul_t(&self.eigenvectors)
    }
}

/// Flips each column so its largest-magnitude entry is positive; on ties the
/// smallest index decides.
pub fn normalize_signs(u: &mut Matrix) {
    for j in 0..u.cols() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..u.rows() {
            let a = math::abs(u.get(i, j));
            if a > best_abs + 1e-12 {
                best = i;
                best_abs = a;
            }
        }
        if u.rows() > 0 && u.get(best, j) < 0.0 {
            for i in 0..u.rows() {
                u.set(i, j, -u.get(i, j));
            }
        }
    }
}

/// Full dense eigendecomposition of a symmetric matrix.
pub fn symmetric_eig(b: &Matrix) -> Result<SpectralDecomposition> {
    if !b.is_square() {
        return Err(Error::ShapeMismatch { op: "symmetric_eig", lhs: b.shape(), rhs: b.shape() });
    }
    let asym = b.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let eig = symmetric_eigen(b)?;
    let mut vectors = eig.eigenvectors;
    normalize_signs(&mut vectors);
    Ok(SpectralDecomposition { eigenvalues: eig.eigenvalues, eigenvectors: vectors })
}

/// Solver selection for the smallest eigenpairs of a sparse operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverConfig {
    /// Graphs with more nodes than this go through Lanczos.
    pub dense_cutoff: usize,
    /// Cap on the Krylov dimension; `0` means `N`.
    pub max_krylov: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { dense_cutoff: DEFAULT_DENSE_CUTOFF, max_krylov: 0 }
    }
}

/// The `k` smallest eigenpairs of a symmetric sparse matrix, sign-normalized.
pub fn smallest_eigenpairs(m: &SparseMatrix, k: usize, cfg: &SolverConfig) -> Result<SpectralDecomposition> {
    let n = m.n();
    if k > n {
        return Err(Error::BadDimension { p: k, n });
    }
    if n <= cfg.dense_cutoff {
        let full = symmetric_eig(&m.to_dense())?;
        let cols: Vec<usize> = (0..k).collect();
        return Ok(SpectralDecomposition {
            eigenvalues: full.eigenvalues[..k].to_vec(),
            eigenvectors: full.eigenvectors.select_columns(&cols),
        });
    }
    let max_dim = if cfg.max_krylov == 0 { n } else { cfg.max_krylov.min(n) };
    let mut out = lanczos_smallest(|x, y| m.mul_vec(x, y), n, k, max_dim)?;
    normalize_signs(&mut out.eigenvectors);
    Ok(out)
}

/// Lanczos with full reorthogonalization for the `k` smallest eigenpairs of
/// the symmetric operator `apply` on `R^n`.
///
/// The Krylov basis grows until every wanted Ritz pair has residual below
/// `1e-10` times the spectral radius estimate, or until `max_dim` vectors
/// have been built. An invariant subspace restarts the recurrence with a
/// fresh random direction; since that signals repeated eigenvalues, whose
/// copies a single Krylov sequence cannot count, the basis is then grown to
/// `max_dim` before the result is accepted.
pub fn lanczos_smallest(
    apply: impl Fn(&[f64], &mut [f64]),
    n: usize,
    k: usize,
    max_dim: usize,
) -> Result<SpectralDecomposition> {
    if k == 0 {
        return Ok(SpectralDecomposition { eigenvalues: Vec::new(), eigenvectors: Matrix::zeros(n, 0) });
    }
    let max_dim = max_dim.clamp(k, n);
    let mut rng = seeded(0x1a2c_2051);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_dim);
    let mut alpha: Vec<f64> = Vec::with_capacity(max_dim);
    let mut beta: Vec<f64> = Vec::with_capacity(max_dim);
    let mut q = fresh_direction(&mut rng, n, &basis);
    let mut w = vec![0.0; n];
    let mut restarted = false;
    loop {
        apply(&q, &mut w);
        let a = dot(&q, &w);
        basis.push(q);
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                for (x, y) in w.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let b = norm2(&w);
        let m = basis.len();
        let check = m >= k && (m == max_dim || m.is_multiple_of(8) || b < 1e-12);
        if check {
            let t = tridiagonal_eigen(&alpha, &beta)?;
            let scale = t.eigenvalues.iter().fold(1e-300f64, |s, &v| s.max(math::abs(v)));
            let converged = !restarted
                && (0..k).all(|i| math::abs(b * t.eigenvectors.get(m - 1, i)) <= 1e-10 * scale);
            if converged || m == max_dim {
                if !converged && m < n {
                    // Either slow convergence or a restart that never filled the space.
                    return Err(Error::ConvergenceFailure { what: "lanczos", iterations: m });
                }
                let mut z = Matrix::zeros(n, k);
                for (r, v) in basis.iter().enumerate() {
                    for j in 0..k {
                        let s = t.eigenvectors.get(r, j);
                        for i in 0..n {
                            z.set(i, j, z.get(i, j) + s * v[i]);
                        }
                    }
                }
                return Ok(SpectralDecomposition { eigenvalues: t.eigenvalues[..k].to_vec(), eigenvectors: z });
            }
        }
        if b < 1e-12 {
            restarted = true;
            beta.push(0.0);
            q = fresh_direction(&mut rng, n, &basis);
        } else {
            beta.push(b);
            q = w.iter().map(|x| x / b).collect();
        }
    }
}

fn fresh_direction(rng: &mut crate::rng::SeededRng, n: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        for _ in 0..2 {
            for b in basis {
                let c = dot(b, &v);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let nv = norm2(&v);
        if nv > 1e-8 {
            return v.into_iter().map(|x| x / nv).collect();
        }
    }
}

/// How a positional encoding was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PeMethod {
    LaplacianEigenmap,
    Factorization,
}

/// Raised when `λ_p` and `λ_{p+1}` coincide, so the eigenspace spanned by
/// the encoding is not uniquely determined by the graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplicityWarning {
    pub p: usize,
    pub lambda_p: f64,
    pub lambda_next: f64,
}

/// `N x p` node positional features.
#[derive(Debug, Clone)]
pub struct PositionalEncoding {
    pub z: Matrix,
    pub method: PeMethod,
    pub eigenvalues_used: Vec<f64>,
    pub p: usize,
    /// `λ_{p+1}` for eigenmaps, when available.
    pub next_eigenvalue: Option<f64>,
    pub warning: Option<MultiplicityWarning>,
}

impl PositionalEncoding {
    pub fn from_matrix(z: Matrix, method: PeMethod) -> Self {
        let p = z.cols();
        Self { z, method, eigenvalues_used: Vec::new(), p, next_eigenvalue: None, warning: None }
    }
}

pub(crate) fn nearly_equal(a: f64, b: f64) -> bool {
    math::abs(a - b) <= MULTIPLICITY_TOL * 1f64.max(math::abs(a)).max(math::abs(b))
}

/// Eigenvectors of the `p` smallest eigenvalues of the normalized Laplacian.
pub fn laplacian_eigenmap(g: &Graph, p: usize, policy: SelfLoops, cfg: &SolverConfig) -> Result<PositionalEncoding> {
    let n = g.num_nodes();
    if p == 0 || p >= n {
        return Err(Error::BadDimension { p, n });
    }
    let l = normalized_laplacian(g, policy)?;
    let dec = smallest_eigenpairs(&l, p + 1, cfg)?;
    let cols: Vec<usize> = (0..p).collect();
    let (lp, lnext) = (dec.eigenvalues[p - 1], dec.eigenvalues[p]);
    let warning = if nearly_equal(lp, lnext) {
        log::warn!("eigenmap dimension {p} splits a repeated eigenvalue ({lp} vs {lnext})");
        Some(MultiplicityWarning { p, lambda_p: lp, lambda_next: lnext })
    } else {
        None
    };
    Ok(PositionalEncoding {
        z: dec.eigenvectors.select_columns(&cols),
        method: PeMethod::LaplacianEigenmap,
        eigenvalues_used: dec.eigenvalues[..p].to_vec(),
        p,
        next_eigenvalue: Some(lnext),
        warning,
    })
}

/// Eigengap summary at dimension `p` (1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EigengapDiagnostics {
    pub p: usize,
    pub lambda_p: f64,
    pub gap_p: f64,
    pub min_consecutive_gap: f64,
    pub stability_ratio: f64,
    pub delta: f64,
}

/// `gap_p = λ_{p+1} - λ_p`, the smallest gap among `k = 1..=p`, their ratio
/// and `δ = 1 / gap_p`.
///
/// `δ` is `f64::INFINITY` when the two eigenvalues agree to the multiplicity
/// tolerance. The ratio is infinite when the smallest gap is exactly zero
/// and `gap_p` is not; it is 1 when both vanish.
pub fn eigengap_diagnostics(eigs: &[f64], p: usize) -> Result<EigengapDiagnostics> {
    if p == 0 {
        return Err(Error::BadDimension { p, n: eigs.len() });
    }
    if eigs.len() < p + 1 {
        return Err(Error::TooFewEigenvalues { needed: p + 1, got: eigs.len() });
    }
    let gap_p = eigs[p] - eigs[p - 1];
    let min_gap = (0..p).map(|k| math::abs(eigs[k + 1] - eigs[k])).fold(f64::INFINITY, f64::min);
    let stability_ratio = if min_gap > 0.0 {
        math::abs(gap_p) / min_gap
    } else if gap_p != 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    let delta = if nearly_equal(eigs[p - 1], eigs[p]) { f64::INFINITY } else { 1.0 / gap_p };
    Ok(EigengapDiagnostics { p, lambda_p: eigs[p - 1], gap_p, min_consecutive_gap: min_gap, stability_ratio, delta })
}

/// Outcome of the two-eigenvector rotation attack.
#[derive(Debug, Clone)]
pub struct AdversarialPerturbation {
    pub perturbed: Matrix,
    pub delta_b: Matrix,
    /// 1-based index of the rotated pair `(k, k + 1)`.
    pub k: usize,
    pub delta_b_norm: f64,
    /// `min_S ‖PE(B) - PE(B') S‖_F` over sign flips `S`.
    pub pe_change: f64,
    /// `pe_change / ‖ΔB‖_F`, or 0 when `ΔB = 0`.
    pub ratio: f64,
}

/// Largest `eps` accepted by [`adversarial_perturbation`].
pub const MAX_ADVERSARIAL_EPS: f64 = 0.05;

/// The `p` columns of `U` for the smallest eigenvalues of `b`, sign-normalized.
pub fn smallest_eigenvectors(b: &Matrix, p: usize) -> Result<Matrix> {
    let dec = symmetric_eig(b)?;
    if p > b.rows() {
        return Err(Error::BadDimension { p, n: b.rows() });
    }
    let cols: Vec<usize> = (0..p).collect();
    Ok(dec.eigenvectors.select_columns(&cols))
}

/// Rotates the eigenvector pair `(u_k, u_{k+1})` with the smallest gap among
/// the first `p + 1` eigenvalues by angle `asin(eps)`, rebuilds
/// `B' = Σ λ_i u'_i u'_i^T` and measures how far the `p`-dimensional
/// eigenvector encoding moves relative to `‖B' - B‖_F`.
pub fn adversarial_perturbation(b: &Matrix, p: usize, eps: f64) -> Result<AdversarialPerturbation> {
    let n = b.rows();
    if p == 0 || p >= n {
        return Err(Error::BadDimension { p, n });
    }
    if !(0.0..=MAX_ADVERSARIAL_EPS).contains(&eps) {
        return Err(Error::EpsTooLarge { eps });
    }
    let dec = symmetric_eig(b)?;
    let lam = &dec.eigenvalues;
    for i in 0..p {
        if nearly_equal(lam[i], lam[i + 1]) {
            return Err(Error::MultipleEigenvalues { index: i + 1, next: i + 2 });
        }
    }
    let mut k0 = 0;
    for i in 1..p {
        if lam[i + 1] - lam[i] < lam[k0 + 1] - lam[k0] {
            k0 = i;
        }
    }
    if eps == 0.0 {
        return Ok(AdversarialPerturbation {
            perturbed: b.clone(),
            delta_b: Matrix::zeros(n, n),
            k: k0 + 1,
            delta_b_norm: 0.0,
            pe_change: 0.0,
            ratio: 0.0,
        });
    }
    let c = math::sqrt(1.0 - eps * eps);
    let uk = dec.eigenvectors.column(k0);
    let uk1 = dec.eigenvectors.column(k0 + 1);
    let mut rotated = dec.eigenvectors.clone();
    let new_k: Vec<f64> = uk.iter().zip(&uk1).map(|(a, b)| c * a + eps * b).collect();
    let new_k1: Vec<f64> = uk.iter().zip(&uk1).map(|(a, b)| -eps * a + c * b).collect();
    rotated.set_column(k0, &new_k);
    rotated.set_column(k0 + 1, &new_k1);
    let perturbed = SpectralDecomposition { eigenvalues: lam.clone(), eigenvectors: rotated }.reconstruct();
    // Symmetrize away rounding so the re-diagonalization accepts it.
    let perturbed = perturbed.add(&perturbed.transpose()).scale(0.5);
    let delta_b = perturbed.sub(b);
    let delta_b_norm = delta_b.frobenius_norm();
    let cols: Vec<usize> = (0..p).collect();
    let z = dec.eigenvectors.select_columns(&cols);
    let z_new = smallest_eigenvectors(&perturbed, p)?;
    let pe_change = sign_match(&z, &z_new)?.distance;
    let ratio = if delta_b_norm > 0.0 { pe_change / delta_b_norm } else { 0.0 };
    Ok(AdversarialPerturbation { perturbed, delta_b, k: k0 + 1, delta_b_norm, pe_change, ratio })
}

/// `2^{3/2} δ min(√p ‖Δ‖_op, ‖Δ‖_F)` with `Δ = B1 - P B2 P^T` and
/// `δ = min_i (λ^{(i)}_{p+1} - λ^{(i)}_p)^{-1}`.
pub fn davis_kahan_bound(b1: &Matrix, b2: &Matrix, p: usize, perm: &Permutation) -> Result<f64> {
    let n = b1.rows();
    if b2.shape() != b1.shape() || !b1.is_square() {
        return Err(Error::ShapeMismatch { op: "davis_kahan_bound", lhs: b1.shape(), rhs: b2.shape() });
    }
    if perm.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: perm.len() });
    }
    if p == 0 || p >= n {
        return Err(Error::BadDimension { p, n });
    }
    let delta = eigengap_delta(b1, p)?.min(eigengap_delta(b2, p)?);
    if !delta.is_finite() {
        return Err(Error::ZeroEigengap);
    }
    let diff = b1.sub(&perm.conjugate(b2));
    let diff = diff.add(&diff.transpose()).scale(0.5);
    let op = symmetric_eig(&diff)?.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(math::abs(v)));
    let fro = diff.frobenius_norm();
    Ok(2.0 * core::f64::consts::SQRT_2 * delta * (math::sqrt(p as f64) * op).min(fro))
}

/// `1 / (λ_{p+1} - λ_p)` of a symmetric matrix, infinite on a repeated pair.
pub fn eigengap_delta(b: &Matrix, p: usize) -> Result<f64> {
    let dec = symmetric_eig(b)?;
    Ok(eigengap_diagnostics(&dec.eigenvalues, p)?.delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::procrustes::pe_match;
    use crate::rng::normal_matrix;

    fn cycle(n: usize) -> Graph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::from_edges(n, &edges, false).unwrap()
    }

    fn check_decomposition(b: &Matrix, d: &SpectralDecomposition) {
        let bf = b.frobenius_norm().max(1e-300);
        for i in 0..b.rows() {
            let u = d.eigenvectors.column(i);
            let bu = b.mul_vec(&u);
            let r: f64 = bu.iter().zip(&u).map(|(x, y)| (x - d.eigenvalues[i] * y).powi(2)).sum::<f64>().sqrt();
            assert!(r <= 1e-8 * bf.max(1.0), "residual {r}");
        }
        let utu = d.eigenvectors.t_matmul(&d.eigenvectors);
        assert!(utu.sub(&Matrix::identity(b.rows())).frobenius_norm() <= 1e-10);
        assert!(d.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn identity_and_diagonal() {
        let d = symmetric_eig(&Matrix::identity(4)).unwrap();
        assert!(d.eigenvalues.iter().all(|&x| x == 1.0));
        let d = symmetric_eig(&Matrix::diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(d.eigenvalues, vec![1.0, 2.0, 3.0]);
        // Sign convention makes the permuted identity exactly positive.
        assert_eq!(d.eigenvectors.column(0), vec![0.0, 1.0, 0.0]);
        assert_eq!(d.eigenvectors.column(1), vec![0.0, 0.0, 1.0]);
        assert_eq!(d.eigenvectors.column(2), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(matches!(symmetric_eig(&m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn random_symmetric_decompositions() {
        let mut rng = seeded(3);
        for n in [1usize, 2, 5, 17, 40] {
            let g = normal_matrix(&mut rng, n, n, 1.0);
            let b = g.add(&g.transpose());
            let d = symmetric_eig(&b).unwrap();
            check_decomposition(&b, &d);
            assert!(d.reconstruct().sub(&b).frobenius_norm() <= 1e-8 * b.frobenius_norm());
            for j in 0..n {
                let col = d.eigenvectors.column(j);
                let (mut bi, mut ba) = (0, -1.0);
                for (i, &x) in col.iter().enumerate() {
                    if x.abs() > ba + 1e-12 {
                        bi = i;
                        ba = x.abs();
                    }
                }
                assert!(col[bi] > 0.0);
            }
        }
    }

    #[test]
    fn lanczos_matches_dense() {
        let g = crate::sbm::sbm_generate(&crate::sbm::SbmConfig {
            blocks: vec![40, 40],
            p_within: 0.3,
            p_between: 0.05,
            seed: 9,
            feature_mode: crate::sbm::FeatureMode::None,
        })
        .unwrap();
        let l = normalized_laplacian(&g, SelfLoops::PadIsolated).unwrap();
        let dense = smallest_eigenpairs(&l, 6, &SolverConfig::default()).unwrap();
        let iter = smallest_eigenpairs(&l, 6, &SolverConfig { dense_cutoff: 10, max_krylov: 0 }).unwrap();
        for (a, b) in dense.eigenvalues.iter().zip(&iter.eigenvalues) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        let eta = pe_match(&dense.eigenvectors, &iter.eigenvectors).unwrap().eta;
        assert!(eta < 1e-6, "{eta}");
    }

    #[test]
    fn lanczos_restarts_on_invariant_subspace() {
        // Block diagonal: the start vector's Krylov space closes early.
        let d: Vec<f64> = (0..30).map(|i| (i % 3) as f64).collect();
        let m = Matrix::diag(&d);
        let out = lanczos_smallest(|x, y| y.copy_from_slice(&m.mul_vec(x)), 30, 12, 30).unwrap();
        let mut want = d.clone();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in out.eigenvalues.iter().zip(&want[..12]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn k3_spectrum() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2), (2, 0)], false).unwrap();
        let l = normalized_laplacian(&g, SelfLoops::Strict).unwrap().to_dense();
        let d = symmetric_eig(&l).unwrap();
        for (x, y) in d.eigenvalues.iter().zip([0.0, 1.5, 1.5]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenmap_first_column_is_sqrt_degree() {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (1, 3)], false).unwrap();
        let pe = laplacian_eigenmap(&g, 1, SelfLoops::Strict, &SolverConfig::default()).unwrap();
        let sq: Vec<f64> = (0..5).map(|u| (g.degree(u) as f64).sqrt()).collect();
        let l = normalized_laplacian(&g, SelfLoops::Strict).unwrap();
        let mut out = vec![0.0; 5];
        l.mul_vec(&sq, &mut out);
        assert!(out.iter().all(|x| x.abs() < 1e-12));
        let nrm = norm2(&sq);
        for u in 0..5 {
            assert!((pe.z.get(u, 0) - sq[u] / nrm).abs() < 1e-10);
        }
        assert!(pe.warning.is_none());
    }

    #[test]
    fn eigenmap_two_triangles() {
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)], false).unwrap();
        let pe = laplacian_eigenmap(&g, 2, SelfLoops::Strict, &SolverConfig::default()).unwrap();
        assert!(pe.warning.is_none());
        let ind = Matrix::from_fn(6, 2, |i, j| if (i < 3) == (j == 0) { 1.0 / 3f64.sqrt() } else { 0.0 });
        assert!(pe_match(&ind, &pe.z).unwrap().eta < 1e-10);
    }

    #[test]
    fn eigenmap_k3_warns() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2), (2, 0)], false).unwrap();
        let pe = laplacian_eigenmap(&g, 2, SelfLoops::Strict, &SolverConfig::default()).unwrap();
        let w = pe.warning.unwrap();
        assert_eq!(w.p, 2);
        assert!((w.lambda_p - 1.5).abs() < 1e-12);
        assert!(laplacian_eigenmap(&g, 3, SelfLoops::Strict, &SolverConfig::default()).is_err());
        assert!(laplacian_eigenmap(&g, 0, SelfLoops::Strict, &SolverConfig::default()).is_err());
    }

    #[test]
    fn eigenmap_columns_orthonormal_rows_bounded() {
        let pe = laplacian_eigenmap(&cycle(9), 4, SelfLoops::Strict, &SolverConfig::default()).unwrap();
        let ztz = pe.z.t_matmul(&pe.z);
        assert!(ztz.sub(&Matrix::identity(4)).frobenius_norm() <= 1e-8);
        for u in 0..9 {
            assert!(norm2(pe.z.row(u)) <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn gap_diagnostics_examples() {
        let d = eigengap_diagnostics(&[0.0, 0.1, 0.2, 1.2], 3).unwrap();
        assert!((d.gap_p - 1.0).abs() < 1e-12);
        assert!((d.min_consecutive_gap - 0.1).abs() < 1e-12);
        assert!((d.stability_ratio - 10.0).abs() < 1e-9);
        assert!((d.delta * d.gap_p - 1.0).abs() < 1e-12);
        let d = eigengap_diagnostics(&[0.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(d.delta, f64::INFINITY);
        let d = eigengap_diagnostics(&[0.0, 0.5, 1.0, 1.5, 2.0], 3).unwrap();
        assert!((d.stability_ratio - 1.0).abs() < 1e-12);
        assert_eq!(
            eigengap_diagnostics(&[0.0, 1.0], 2),
            Err(Error::TooFewEigenvalues { needed: 3, got: 2 })
        );
    }

    // Oracle: rebuild ΔB from the explicit rotation, re-diagonalize and take
    // the best of all 2^p sign matrices.
    fn oracle_ratio(diag: &[f64], p: usize, eps: f64) -> f64 {
        let b = Matrix::diag(diag);
        let n = diag.len();
        let gaps: Vec<f64> = (0..p).map(|i| diag[i + 1] - diag[i]).collect();
        let k = (0..p).fold(0, |best, i| if gaps[i] < gaps[best] { i } else { best });
        let mut u = Matrix::identity(n);
        let c = (1.0 - eps * eps).sqrt();
        u.set(k, k, c);
        u.set(k + 1, k, eps);
        u.set(k, k + 1, -eps);
        u.set(k + 1, k + 1, c);
        let bp = u.matmul(&Matrix::diag(diag)).matmul_t(&u);
        let db = bp.sub(&b).frobenius_norm();
        let z0 = Matrix::identity(n).select_columns(&(0..p).collect::<Vec<_>>());
        let z1 = smallest_eigenvectors(&bp, p).unwrap();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << p) {
            let s = Matrix::diag(&(0..p).map(|j| if mask >> j & 1 == 1 { -1.0 } else { 1.0 }).collect::<Vec<_>>());
            best = best.min(z0.sub(&z1.matmul(&s)).frobenius_norm());
        }
        best / db
    }

    #[test]
    fn adversarial_diag_examples() {
        let r = adversarial_perturbation(&Matrix::diag(&[0.0, 1.0, 2.0, 5.0]), 3, 1e-3).unwrap();
        assert!((r.ratio - 1.0).abs() < 0.01, "{}", r.ratio);
        assert!((r.ratio - oracle_ratio(&[0.0, 1.0, 2.0, 5.0], 3, 1e-3)).abs() < 1e-6);
        let r = adversarial_perturbation(&Matrix::diag(&[0.0, 1.0, 1.01, 5.0]), 3, 1e-4).unwrap();
        assert!((r.ratio - 100.0).abs() < 2.0, "{}", r.ratio);
        assert!((r.ratio - oracle_ratio(&[0.0, 1.0, 1.01, 5.0], 3, 1e-4)).abs() < 1e-3 * r.ratio);
        let r = adversarial_perturbation(&Matrix::diag(&[0.0, 1.0, 2.0, 5.0]), 3, 0.0).unwrap();
        assert_eq!(r.ratio, 0.0);
        assert_eq!(r.delta_b.max_abs(), 0.0);
    }

    #[test]
    fn adversarial_errors() {
        let b = Matrix::diag(&[0.0, 1.0, 1.0, 3.0]);
        assert!(matches!(adversarial_perturbation(&b, 3, 1e-3), Err(Error::MultipleEigenvalues { .. })));
        let b = Matrix::diag(&[0.0, 1.0, 2.0, 3.0]);
        assert!(matches!(adversarial_perturbation(&b, 2, 0.1), Err(Error::EpsTooLarge { .. })));
    }

    #[test]
    fn davis_kahan_examples() {
        let b = Matrix::diag(&[0.0, 1.0, 3.0, 4.0]);
        let p = Permutation::new(vec![2, 0, 3, 1]).unwrap();
        let b2 = p.inverse().conjugate(&b);
        assert!(davis_kahan_bound(&b, &b2, 2, &p).unwrap() < 1e-12);

        // Diagonal pair: Δ = diag(0, 0.5, 0, 0), gaps at p=2 are 2 and 1.5.
        let b2 = Matrix::diag(&[0.0, 0.5, 3.0, 4.0]);
        let bound = davis_kahan_bound(&b, &b2, 2, &Permutation::identity(4)).unwrap();
        let want = 2f64.powf(1.5) * (1.0 / 2.5f64).min(0.5) * (2f64.sqrt() * 0.5f64).min(0.5);
        assert!((bound - want).abs() < 1e-12, "{bound} vs {want}");

        let mut rng = seeded(5);
        let noise = normal_matrix(&mut rng, 4, 4, 1.0);
        let noise = noise.add(&noise.transpose()).scale(0.5e-3);
        let b3 = b.add(&noise);
        let bound = davis_kahan_bound(&b, &b3, 2, &Permutation::identity(4)).unwrap();
        let sigma = symmetric_eig(&noise).unwrap().eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let delta = (1.0 / 2.0f64).min(1.0 / (symmetric_eig(&b3).unwrap().eigenvalues[2] - symmetric_eig(&b3).unwrap().eigenvalues[1]));
        let want = 2f64.powf(1.5) * delta * (2f64.sqrt() * sigma).min(noise.frobenius_norm());
        assert!((bound - want).abs() < 1e-12);
    }

    #[test]
    fn davis_kahan_zero_gap() {
        let b = Matrix::diag(&[0.0, 1.0, 1.0]);
        assert_eq!(davis_kahan_bound(&b, &b, 1 + 1, &Permutation::identity(3)), Err(Error::ZeroEigengap));
    }
}
