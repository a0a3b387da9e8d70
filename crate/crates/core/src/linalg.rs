//! Dense row-major matrices and the small set of factorizations the rest of
//! the crate needs: Householder tridiagonalization + implicit-shift QL for
//! symmetric eigenproblems, one-sided Jacobi SVD, and Gram-Schmidt QR.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::math;

/// Dense `rows x cols` matrix of `f64`, row-major.
#[derive(Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for j in 0..self.cols.min(8) {
                write!(f, "{:>10.4} ", self.get(i, j))?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row slices; panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn column_vector(values: &[f64]) -> Self {
        Self { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        for (i, &v) in values.iter().enumerate() {
            self.set(i, j, v);
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self * rhs`. Panics on incompatible shapes.
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^T * rhs` without forming the transpose.
    pub fn t_matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.rows, rhs.rows, "t_matmul shape mismatch");
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = rhs.row(k);
            for (i, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * rhs^T`.
    pub fn matmul_t(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.cols, "matmul_t shape mismatch");
        Matrix::from_fn(self.rows, rhs.rows, |i, j| dot(self.row(i), rhs.row(j)))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    fn zip_with(&self, rhs: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(self.shape(), rhs.shape(), "elementwise shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn add(&self, rhs: &Matrix) -> Matrix {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Matrix {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn hadamard(&self, rhs: &Matrix) -> Matrix {
        self.zip_with(rhs, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|x| x * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn add_assign_scaled(&mut self, rhs: &Matrix, s: f64) {
        assert_eq!(self.shape(), rhs.shape());
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += s * b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        math::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(math::abs(x)))
    }

    pub fn max_abs_diff(&self, rhs: &Matrix) -> f64 {
        assert_eq!(self.shape(), rhs.shape());
        self.data.iter().zip(&rhs.data).fold(0.0, |m, (&a, &b)| m.max(math::abs(a - b)))
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max(math::abs(self.get(i, j) - self.get(j, i)));
            }
        }
        worst
    }

    /// Keeps the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, cols.len(), |i, j| self.get(i, cols[j]))
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix { rows: rows.len(), cols: self.cols, data }
    }

    /// Horizontal concatenation.
    pub fn hcat(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.rows, rhs.rows);
        Matrix::from_fn(self.rows, self.cols + rhs.cols, |i, j| {
            if j < self.cols {
                self.get(i, j)
            } else {
                rhs.get(i, j - self.cols)
            }
        })
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Operator (spectral) norm, the largest singular value.
    pub fn operator_norm(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        let svd = self.svd();
        svd.singular_values.first().copied().unwrap_or(0.0)
    }

    /// Thin QR by twice-iterated modified Gram-Schmidt. Returns `None` when
    /// the columns are numerically dependent.
    pub fn qr_thin(&self) -> Option<(Matrix, Matrix)> {
        let (m, n) = self.shape();
        if n > m {
            return None;
        }
        let mut q = Matrix::zeros(m, n);
        let mut r = Matrix::zeros(n, n);
        let mut v = vec![0.0; m];
        for j in 0..n {
            for (i, vi) in v.iter_mut().enumerate() {
                *vi = self.get(i, j);
            }
            let original = math::sqrt(v.iter().map(|x| x * x).sum());
            for _pass in 0..2 {
                for k in 0..j {
                    let mut c = 0.0;
                    for (i, vi) in v.iter().enumerate() {
                        c += q.get(i, k) * vi;
                    }
                    r.set(k, j, r.get(k, j) + c);
                    for (i, vi) in v.iter_mut().enumerate() {
                        *vi -= c * q.get(i, k);
                    }
                }
            }
            let norm = math::sqrt(v.iter().map(|x| x * x).sum());
            if norm <= 1e-14 * original.max(1e-300) || norm == 0.0 {
                return None;
            }
            r.set(j, j, norm);
            for (i, vi) in v.iter().enumerate() {
                q.set(i, j, vi / norm);
            }
        }
        Some((q, r))
    }

    /// Singular value decomposition `A = U diag(s) V^T` by one-sided Jacobi.
    ///
    /// Returns thin factors: `U` is `m x k`, `V` is `n x k` with
    /// `k = min(m, n)`; singular values are sorted descending.
    pub fn svd(&self) -> Svd {
        if self.rows < self.cols {
            let t = self.transpose().svd();
            return Svd { u: t.v, singular_values: t.singular_values, v: t.u };
        }
        jacobi_svd(self)
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

/// Thin singular value decomposition.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

fn jacobi_svd(a: &Matrix) -> Svd {
    let (m, n) = a.shape();
    // Work on columns stored contiguously.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = 1e-15;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || math::abs(gamma) <= tol * math::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (math::abs(zeta) + math::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                let (lo, hi) = vcols.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(core::cmp::Ordering::Equal));
    let mut u = Matrix::zeros(m, n);
    let mut v = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let smax = norms.iter().cloned().fold(0.0, f64::max);
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        s.push(sigma);
        if sigma > 1e-300 && sigma > smax * 1e-15 {
            for i in 0..m {
                u.set(i, k, cols[j][i] / sigma);
            }
        }
        for i in 0..n {
            v.set(i, k, vcols[j][i]);
        }
    }
    complete_orthonormal_columns(&mut u, &s, smax);
    Svd { u, singular_values: s, v }
}

// Replaces columns of `u` belonging to (numerically) zero singular values with
// unit vectors orthogonal to the others so `u` keeps orthonormal columns.
fn complete_orthonormal_columns(u: &mut Matrix, s: &[f64], smax: f64) {
    let (m, k) = u.shape();
    for j in 0..k {
        if s[j] > 1e-300 && s[j] > smax * 1e-15 {
            continue;
        }
        for e in 0..m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            for other in 0..k {
                if other == j {
                    continue;
                }
                let col = u.column(other);
                let c = dot(&col, &cand);
                for (x, y) in cand.iter_mut().zip(&col) {
                    *x -= c * y;
                }
            }
            let nrm = norm2(&cand);
            if nrm > 0.5 {
                let col: Vec<f64> = cand.iter().map(|x| x / nrm).collect();
                u.set_column(j, &col);
                break;
            }
        }
    }
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let xa = *a;
        let yb = *b;
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Raw output of the symmetric eigensolver: ascending eigenvalues and the
/// matching eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

/// Iteration cap for each eigenvalue in the QL sweep.
pub const QL_MAX_ITERS: usize = 60;

/// Eigendecomposition of a symmetric matrix via Householder
/// tridiagonalization followed by the implicit-shift QL algorithm.
///
/// Only the lower triangle is read. Eigenvalues come back ascending.
pub fn symmetric_eigen(b: &Matrix) -> Result<SymmetricEigen> {
    let n = b.rows();
    if !b.is_square() {
        return Err(Error::ShapeMismatch { op: "symmetric_eigen", lhs: b.shape(), rhs: b.shape() });
    }
    if n == 0 {
        return Ok(SymmetricEigen { eigenvalues: Vec::new(), eigenvectors: Matrix::zeros(0, 0) });
    }
    // tred2 walks columns, so it runs on column-major storage. For the
    // symmetric input that is the same buffer, and on exit the buffer read
    // row-major is V^T, the layout tql2 wants.
    let mut vt = b.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut ColMajor { data: vt.data_mut(), n }, &mut d, &mut e);
    tql2(&mut vt, &mut d, &mut e)?;
    Ok(sorted_eigen(d, vt))
}

/// Eigendecomposition of the symmetric tridiagonal matrix with diagonal
/// `diag` and off-diagonal `off` (length `n - 1`).
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<SymmetricEigen> {
    let n = diag.len();
    if n == 0 {
        return Ok(SymmetricEigen { eigenvalues: Vec::new(), eigenvectors: Matrix::zeros(0, 0) });
    }
    let mut d = diag.to_vec();
    // tql2 expects e[i] = subdiagonal element in row i (e[0] unused).
    let mut e = vec![0.0; n];
    e[1..n].copy_from_slice(&off[..(n - 1)]);
    let mut vt = Matrix::identity(n);
    tql2(&mut vt, &mut d, &mut e)?;
    Ok(sorted_eigen(d, vt))
}

fn sorted_eigen(d: Vec<f64>, vt: Matrix) -> SymmetricEigen {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap_or(core::cmp::Ordering::Equal).then(i.cmp(&j)));
    let mut vectors = Matrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (k, &src) in order.iter().enumerate() {
        values.push(d[src]);
        let row = vt.row(src);
        for i in 0..n {
            vectors.set(i, k, row[i]);
        }
    }
    SymmetricEigen { eigenvalues: values, eigenvectors: vectors }
}

// Householder reduction to tridiagonal form (after the EISPACK routine tred2).
// On exit `v` holds the orthogonal transformation, `d` the diagonal and `e`
// the subdiagonal in e[1..n].
struct ColMajor<'a> {
    data: &'a mut [f64],
    n: usize,
}

impl core::ops::Index<(usize, usize)> for ColMajor<'_> {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[j * self.n + i]
    }
}

impl core::ops::IndexMut<(usize, usize)> for ColMajor<'_> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[j * self.n + i]
    }
}

fn tred2(v: &mut ColMajor<'_>, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += math::abs(d[k]);
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = math::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in (j + 1)..i {
                    let vkj = v[(k, j)];
                    g += vkj * d[k];
                    e[k] += vkj * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

// Implicit-shift QL on a symmetric tridiagonal matrix (after EISPACK tql2).
// `vt` holds the accumulated transformation transposed: row k is
// eigenvector k on exit.
fn tql2(vt: &mut Matrix, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(math::abs(d[l]) + math::abs(e[l]));
        let mut m = l;
        while m < n {
            if math::abs(e[m]) <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITERS {
                    return Err(Error::ConvergenceFailure { what: "tridiagonal QL", iterations: iter });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = math::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = math::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = vt.data_mut().split_at_mut((i + 1) * n);
                    let row_i = &mut lo[i * n..];
                    let row_i1 = &mut hi[..n];
                    for k in 0..n {
                        let hk = row_i1[k];
                        row_i1[k] = s * row_i[k] + c * hk;
                        row_i[k] = c * row_i[k] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if math::abs(e[l]) <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut r = rng::seeded(seed);
        let g = rng::normal_matrix(&mut r, n, n, 1.0);
        g.add(&g.transpose()).scale(0.5)
    }

    #[test]
    fn eigen_reconstructs_random_symmetric() {
        for (n, seed) in [(1, 1), (2, 2), (5, 3), (17, 4), (40, 5)] {
            let b = random_symmetric(n, seed);
            let eig = symmetric_eigen(&b).unwrap();
            let u = &eig.eigenvectors;
            let recon = u.matmul(&Matrix::diag(&eig.eigenvalues)).matmul(&u.transpose());
            assert!(recon.sub(&b).frobenius_norm() <= 1e-10 * b.frobenius_norm().max(1.0));
            let gram = u.t_matmul(u);
            assert!(gram.sub(&Matrix::identity(n)).frobenius_norm() < 1e-10);
            assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eigen_of_diagonal() {
        let eig = symmetric_eigen(&Matrix::diag(&[3.0, 1.0, 2.0])).unwrap();
        for (a, b) in eig.eigenvalues.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let diag = [2.0, -1.0, 0.5, 3.0];
        let off = [0.3, 1.2, -0.7];
        let dense = Matrix::from_fn(4, 4, |i, j| {
            if i == j {
                diag[i]
            } else if i + 1 == j {
                off[i]
            } else if j + 1 == i {
                off[j]
            } else {
                0.0
            }
        });
        let a = tridiagonal_eigen(&diag, &off).unwrap();
        let b = symmetric_eigen(&dense).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_reconstructs_and_orders() {
        let mut r = rng::seeded(9);
        for (m, n) in [(6, 2), (3, 3), (2, 5), (10, 4)] {
            let a = rng::normal_matrix(&mut r, m, n, 1.0);
            let svd = a.svd();
            let k = m.min(n);
            assert_eq!(svd.singular_values.len(), k);
            let recon = svd.u.matmul(&Matrix::diag(&svd.singular_values)).matmul(&svd.v.transpose());
            assert!(recon.sub(&a).frobenius_norm() < 1e-11);
            assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
            assert!(svd.u.t_matmul(&svd.u).sub(&Matrix::identity(k)).frobenius_norm() < 1e-10);
        }
    }

    #[test]
    fn svd_rank_deficient_keeps_orthonormal_u() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]);
        let svd = a.svd();
        assert!(svd.singular_values[1].abs() < 1e-12);
        assert!(svd.u.t_matmul(&svd.u).sub(&Matrix::identity(2)).frobenius_norm() < 1e-10);
    }

    #[test]
    fn operator_norm_of_diag() {
        assert!((Matrix::diag(&[1.0, -4.0, 2.0]).operator_norm() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn qr_thin_orthonormal() {
        let mut r = rng::seeded(3);
        let a = rng::normal_matrix(&mut r, 8, 3, 1.0);
        let (q, rr) = a.qr_thin().unwrap();
        assert!(q.matmul(&rr).sub(&a).frobenius_norm() < 1e-12);
        assert!(q.t_matmul(&q).sub(&Matrix::identity(3)).frobenius_norm() < 1e-12);
        assert!(Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).qr_thin().is_none());
    }
}
