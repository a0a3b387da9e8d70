//! Undirected graphs in symmetric CSR form, degree-normalized operators,
//! node relabeling and exhaustive graph matching for tiny graphs.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math;

/// Undirected graph `(A, X)`: adjacency in symmetric CSR plus dense node
/// features `X` (`N x F`, `F` may be 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    features: Matrix,
    allows_self_loops: bool,
}

impl Graph {
    /// Builds a graph from undirected pairs. Both orientations of a pair and
    /// repeats collapse to one edge. Self-loops `(u, u)` are kept only when
    /// `allows_self_loops` is set; otherwise they are an error.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)], allows_self_loops: bool) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(u, v) in edges {
            for x in [u, v] {
                if x >= num_nodes {
                    return Err(Error::IndexOutOfRange { index: x, len: num_nodes });
                }
            }
            if u == v && !allows_self_loops {
                return Err(Error::InvalidArgument("self-loop in a graph that disallows them"));
            }
            set.insert((u.min(v), u.max(v)));
        }
        Ok(Self::from_canonical(num_nodes, set.into_iter(), allows_self_loops))
    }

    fn from_canonical(
        num_nodes: usize,
        edges: impl Iterator<Item = (usize, usize)>,
        allows_self_loops: bool,
    ) -> Self {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for (u, v) in edges {
            adj[u].push(v);
            if u != v {
                adj[v].push(u);
            }
        }
        let mut row_ptr = Vec::with_capacity(num_nodes + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut nbrs in adj {
            nbrs.sort_unstable();
            col_idx.extend_from_slice(&nbrs);
            row_ptr.push(col_idx.len());
        }
        Self { num_nodes, row_ptr, col_idx, features: Matrix::zeros(num_nodes, 0), allows_self_loops }
    }

    /// Attaches node features; the row count must equal `N`.
    pub fn with_features(mut self, features: Matrix) -> Result<Self> {
        if features.rows() != self.num_nodes {
            return Err(Error::LengthMismatch { expected: self.num_nodes, got: features.rows() });
        }
        self.features = features;
        Ok(self)
    }

    pub fn set_features(&mut self, features: Matrix) -> Result<()> {
        if features.rows() != self.num_nodes {
            return Err(Error::LengthMismatch { expected: self.num_nodes, got: features.rows() });
        }
        self.features = features;
        Ok(())
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges (a self-loop counts once).
    pub fn num_edges(&self) -> usize {
        let loops = (0..self.num_nodes).filter(|&u| self.has_edge(u, u)).count();
        (self.col_idx.len() - loops) / 2 + loops
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn allows_self_loops(&self) -> bool {
        self.allows_self_loops
    }

    #[inline]
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[u]..self.row_ptr[u + 1]]
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes && v < self.num_nodes && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Row sum of `A` (a self-loop contributes 1).
    pub fn degree(&self, u: usize) -> usize {
        self.neighbors(u).len()
    }

    /// Edges as `(u, v)` with `u <= v`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes {
            for &v in self.neighbors(u) {
                if u <= v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Same node set and features with a different edge set.
    pub fn with_edge_set(&self, edges: &[(usize, usize)]) -> Result<Self> {
        Graph::from_edges(self.num_nodes, edges, self.allows_self_loops)?.with_features(self.features.clone())
    }

    /// Copy of the graph without the listed undirected edges.
    pub fn without_edges(&self, removed: &[(usize, usize)]) -> Self {
        let drop: BTreeSet<(usize, usize)> = removed.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        let kept = self.edges().into_iter().filter(|e| !drop.contains(e));
        let mut g = Self::from_canonical(self.num_nodes, kept, self.allows_self_loops);
        g.features = self.features.clone();
        g
    }

    /// Dense 0/1 adjacency.
    pub fn adjacency_dense(&self) -> Matrix {
        let mut a = Matrix::zeros(self.num_nodes, self.num_nodes);
        for u in 0..self.num_nodes {
            for &v in self.neighbors(u) {
                a.set(u, v, 1.0);
            }
        }
        a
    }
}

/// How zero-degree nodes (and self-loops in general) are handled before
/// `D^{-1/2} A D^{-1/2}` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SelfLoops {
    /// Add a unit self-loop only to isolated nodes.
    #[default]
    PadIsolated,
    /// Add a unit self-loop to every node that lacks one (`A + I` style).
    All,
    /// Reject graphs with isolated nodes.
    Strict,
}

/// Square sparse matrix in CSR form sharing the graph's sparsity pattern
/// (plus any padded diagonal entries).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterator over `(row, col, value)` in CSR order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |u| {
            (self.row_ptr[u]..self.row_ptr[u + 1]).map(move |k| (u, self.col_idx[k], self.values[k]))
        })
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for (u, v, x) in self.entries() {
            m.set(u, v, x);
        }
        m
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for u in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[u]..self.row_ptr[u + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            out[u] = acc;
        }
    }

    /// `self * x` for a dense `x` with `n` rows.
    pub fn mul_dense(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.rows(), self.n);
        let f = x.cols();
        let mut out = Matrix::zeros(self.n, f);
        for u in 0..self.n {
            let orow = out.row_mut(u);
            for k in self.row_ptr[u]..self.row_ptr[u + 1] {
                let a = self.values[k];
                for (o, &xv) in orow.iter_mut().zip(x.row(self.col_idx[k])) {
                    *o += a * xv;
                }
            }
        }
        out
    }

    /// `I - self`, keeping the sparsity pattern (diagonal inserted if needed).
    pub fn identity_minus(&self) -> SparseMatrix {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::with_capacity(self.nnz() + self.n);
        let mut values = Vec::with_capacity(self.nnz() + self.n);
        for u in 0..self.n {
            let mut diag_done = false;
            for k in self.row_ptr[u]..self.row_ptr[u + 1] {
                let v = self.col_idx[k];
                if !diag_done && v > u {
                    col_idx.push(u);
                    values.push(1.0);
                    diag_done = true;
                }
                if v == u {
                    col_idx.push(u);
                    values.push(1.0 - self.values[k]);
                    diag_done = true;
                } else {
                    col_idx.push(v);
                    values.push(-self.values[k]);
                }
            }
            if !diag_done {
                col_idx.push(u);
                values.push(1.0);
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix { n: self.n, row_ptr, col_idx, values }
    }
}

/// Sparsity pattern of an `rows x cols` CSR matrix without values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrPattern {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl CsrPattern {
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Row index of each stored entry, in storage order.
    pub fn row_of_entries(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nnz());
        for u in 0..self.rows {
            out.extend(core::iter::repeat_n(u, self.row_ptr[u + 1] - self.row_ptr[u]));
        }
        out
    }
}

impl SparseMatrix {
    pub fn pattern(&self) -> CsrPattern {
        CsrPattern { rows: self.n, cols: self.n, row_ptr: self.row_ptr.clone(), col_idx: self.col_idx.clone() }
    }
}

/// Degree vector of the adjacency actually normalized (after self-loop padding).
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeInfo {
    pub degrees: Vec<f64>,
    pub d_max: f64,
}

// CSR of A after applying the self-loop policy.
fn padded_pattern(g: &Graph, policy: SelfLoops) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = g.num_nodes();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(g.col_idx.len() + n);
    row_ptr.push(0);
    for u in 0..n {
        let nbrs = g.neighbors(u);
        let has_loop = nbrs.binary_search(&u).is_ok();
        let pad = match policy {
            SelfLoops::All => !has_loop,
            SelfLoops::PadIsolated => nbrs.is_empty(),
            SelfLoops::Strict => {
                if nbrs.is_empty() {
                    return Err(Error::IsolatedNode { node: u });
                }
                false
            }
        };
        if pad {
            let pos = nbrs.partition_point(|&v| v < u);
            col_idx.extend_from_slice(&nbrs[..pos]);
            col_idx.push(u);
            col_idx.extend_from_slice(&nbrs[pos..]);
        } else {
            col_idx.extend_from_slice(nbrs);
        }
        row_ptr.push(col_idx.len());
    }
    Ok((row_ptr, col_idx))
}

pub fn degree_info(g: &Graph, policy: SelfLoops) -> Result<DegreeInfo> {
    let (row_ptr, _) = padded_pattern(g, policy)?;
    let degrees: Vec<f64> = row_ptr.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let d_max = degrees.iter().cloned().fold(0.0, f64::max);
    Ok(DegreeInfo { degrees, d_max })
}

/// `Â = D^{-1/2} A D^{-1/2}` after the self-loop policy is applied.
pub fn normalized_adjacency(g: &Graph, policy: SelfLoops) -> Result<SparseMatrix> {
    let (row_ptr, col_idx) = padded_pattern(g, policy)?;
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = row_ptr.windows(2).map(|w| 1.0 / math::sqrt((w[1] - w[0]) as f64)).collect();
    let mut values = Vec::with_capacity(col_idx.len());
    for u in 0..n {
        for &v in &col_idx[row_ptr[u]..row_ptr[u + 1]] {
            values.push(inv_sqrt[u] * inv_sqrt[v]);
        }
    }
    Ok(SparseMatrix { n, row_ptr, col_idx, values })
}

/// `L = I - Â`.
pub fn normalized_laplacian(g: &Graph, policy: SelfLoops) -> Result<SparseMatrix> {
    Ok(normalized_adjacency(g, policy)?.identity_minus())
}

/// Bijection on `0..N`; `mapping[u]` is the new label of node `u`.
///
/// As a matrix, `P[mapping[u]][u] = 1`, so relabeling a graph realizes
/// `P A P^T` and `P X`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &m in &mapping {
            if m >= n {
                return Err(Error::IndexOutOfRange { index: m, len: n });
            }
            if seen[m] {
                return Err(Error::InvalidArgument("mapping is not a bijection"));
            }
            seen[m] = true;
        }
        Ok(Self { mapping })
    }

    pub fn identity(n: usize) -> Self {
        Self { mapping: (0..n).collect() }
    }

    /// Transposition of `a` and `b`.
    pub fn swap(n: usize, a: usize, b: usize) -> Self {
        let mut m: Vec<usize> = (0..n).collect();
        m.swap(a, b);
        Self { mapping: m }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    #[inline]
    pub fn apply(&self, u: usize) -> usize {
        self.mapping[u]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (u, &m) in self.mapping.iter().enumerate() {
            inv[m] = u;
        }
        Self { mapping: inv }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Permutation) -> Self {
        Self { mapping: other.mapping.iter().map(|&m| self.mapping[m]).collect() }
    }

    pub fn to_matrix(&self) -> Matrix {
        let n = self.len();
        let mut p = Matrix::zeros(n, n);
        for (u, &m) in self.mapping.iter().enumerate() {
            p.set(m, u, 1.0);
        }
        p
    }

    /// `P X`: row `u` of the input becomes row `mapping[u]`.
    pub fn permute_rows(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.rows(), self.len());
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for (u, &m) in self.mapping.iter().enumerate() {
            out.row_mut(m).copy_from_slice(x.row(u));
        }
        out
    }

    /// `P B P^T` for a dense square matrix.
    pub fn conjugate(&self, b: &Matrix) -> Matrix {
        let n = self.len();
        assert_eq!(b.shape(), (n, n));
        let mut out = Matrix::zeros(n, n);
        for u in 0..n {
            for v in 0..n {
                out.set(self.mapping[u], self.mapping[v], b.get(u, v));
            }
        }
        out
    }

    /// Relabels a node pair.
    pub fn apply_pair(&self, (u, v): (usize, usize)) -> (usize, usize) {
        (self.mapping[u], self.mapping[v])
    }
}

/// Relabels nodes: edge `(u, v)` becomes `(p(u), p(v))` and feature row `u`
/// moves to row `p(u)`.
pub fn apply_permutation(g: &Graph, p: &Permutation) -> Result<Graph> {
    if p.len() != g.num_nodes() {
        return Err(Error::LengthMismatch { expected: g.num_nodes(), got: p.len() });
    }
    let edges: BTreeSet<(usize, usize)> = g
        .edges()
        .into_iter()
        .map(|(u, v)| {
            let (a, b) = p.apply_pair((u, v));
            (a.min(b), a.max(b))
        })
        .collect();
    let mut out = Graph::from_canonical(g.num_nodes(), edges.into_iter(), g.allows_self_loops());
    out.features = p.permute_rows(g.features());
    Ok(out)
}

/// Result of exhaustive graph matching.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMatch {
    pub permutation: Permutation,
    pub distance: f64,
}

/// Largest node count accepted by [`brute_force_match`].
pub const MAX_BRUTE_FORCE_NODES: usize = 10;

/// `‖L1 - P L2 P^T‖_F + ‖X1 - P X2‖_F` for a given permutation.
pub fn matching_distance(l1: &Matrix, x1: &Matrix, l2: &Matrix, x2: &Matrix, p: &Permutation) -> f64 {
    let n = p.len();
    let m = p.mapping();
    let mut sl = 0.0;
    for u in 0..n {
        for v in 0..n {
            let d = l1.get(m[u], m[v]) - l2.get(u, v);
            sl += d * d;
        }
    }
    let mut sx = 0.0;
    for u in 0..n {
        for (a, b) in x1.row(m[u]).iter().zip(x2.row(u)) {
            sx += (a - b) * (a - b);
        }
    }
    math::sqrt(sl) + math::sqrt(sx)
}

/// Exhaustive search for the permutation minimizing
/// `‖L1 - P L2 P^T‖_F + ‖X1 - P X2‖_F`. Permutations are visited in
/// lexicographic order and a later one only wins when strictly better (by
/// more than `1e-12`), so ties resolve to the lexicographically smallest.
pub fn brute_force_match(g1: &Graph, g2: &Graph, policy: SelfLoops) -> Result<GraphMatch> {
    let n = g1.num_nodes();
    if g2.num_nodes() != n {
        return Err(Error::LengthMismatch { expected: n, got: g2.num_nodes() });
    }
    if g1.features().cols() != g2.features().cols() {
        return Err(Error::WidthMismatch { expected: g1.features().cols(), got: g2.features().cols() });
    }
    if n > MAX_BRUTE_FORCE_NODES {
        return Err(Error::TooLarge { n, max: MAX_BRUTE_FORCE_NODES });
    }
    let l1 = normalized_laplacian(g1, policy)?.to_dense();
    let l2 = normalized_laplacian(g2, policy)?.to_dense();
    let (x1, x2) = (g1.features(), g2.features());
    let mut current: Vec<usize> = (0..n).collect();
    let mut best = Permutation::identity(n);
    let mut best_d = matching_distance(&l1, x1, &l2, x2, &best);
    while next_permutation(&mut current) {
        let p = Permutation { mapping: current.clone() };
        let d = matching_distance(&l1, x1, &l2, x2, &p);
        if d < best_d - 1e-12 {
            best_d = d;
            best = p;
        }
    }
    Ok(GraphMatch { permutation: best, distance: best_d })
}

/// Advances to the next lexicographic permutation; false when wrapped.
pub fn next_permutation(a: &mut [usize]) -> bool {
    if a.len() < 2 {
        return false;
    }
    let mut i = a.len() - 1;
    while i > 0 && a[i - 1] >= a[i] {
        i -= 1;
    }
    if i == 0 {
        a.reverse();
        return false;
    }
    let mut j = a.len() - 1;
    while a[j] <= a[i - 1] {
        j -= 1;
    }
    a.swap(i - 1, j);
    a[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigen;

    fn k3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2), (2, 0)], false).unwrap()
    }

    fn cycle(n: usize) -> Graph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::from_edges(n, &edges, false).unwrap()
    }

    #[test]
    fn k3_normalized_adjacency() {
        let a = normalized_adjacency(&k3(), SelfLoops::PadIsolated).unwrap().to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 0.5 };
                assert!((a.get(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_edge_normalized_adjacency() {
        let g = Graph::from_edges(2, &[(0, 1)], false).unwrap();
        let a = normalized_adjacency(&g, SelfLoops::Strict).unwrap().to_dense();
        assert_eq!(a.get(0, 1), 1.0);
        assert_eq!(a.get(1, 0), 1.0);
        assert_eq!(a.get(0, 0), 0.0);
    }

    #[test]
    fn four_cycle_adjacency_spectrum() {
        let a = normalized_adjacency(&cycle(4), SelfLoops::Strict).unwrap().to_dense();
        assert!((a.get(0, 1) - 0.5).abs() < 1e-15);
        assert_eq!(a.get(0, 2), 0.0);
        let eig = symmetric_eigen(&a).unwrap();
        for (x, y) in eig.eigenvalues.iter().zip([-1.0, 0.0, 0.0, 1.0]) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn cycle_laplacian_matches_circulant_formula() {
        for n in [3usize, 5, 8, 11] {
            let l = normalized_laplacian(&cycle(n), SelfLoops::Strict).unwrap().to_dense();
            let eig = symmetric_eigen(&l).unwrap();
            let mut want: Vec<f64> = (0..n)
                .map(|k| 1.0 - (2.0 * core::f64::consts::PI * k as f64 / n as f64).cos())
                .collect();
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (x, y) in eig.eigenvalues.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn k3_laplacian_spectrum() {
        let l = normalized_laplacian(&k3(), SelfLoops::Strict).unwrap().to_dense();
        let eig = symmetric_eigen(&l).unwrap();
        for (x, y) in eig.eigenvalues.iter().zip([0.0, 1.5, 1.5]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn two_components_have_double_zero() {
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)], false).unwrap();
        let l = normalized_laplacian(&g, SelfLoops::Strict).unwrap().to_dense();
        let eig = symmetric_eigen(&l).unwrap();
        assert!(eig.eigenvalues[0].abs() < 1e-12 && eig.eigenvalues[1].abs() < 1e-12);
        assert!(eig.eigenvalues[2] > 0.5);
    }

    #[test]
    fn isolated_nodes_follow_policy() {
        let g = Graph::from_edges(3, &[(0, 1)], false).unwrap();
        assert_eq!(normalized_adjacency(&g, SelfLoops::Strict), Err(Error::IsolatedNode { node: 2 }));
        let a = normalized_adjacency(&g, SelfLoops::PadIsolated).unwrap().to_dense();
        assert_eq!(a.get(2, 2), 1.0);
        let l = normalized_laplacian(&g, SelfLoops::PadIsolated).unwrap().to_dense();
        assert_eq!(l.get(2, 2), 0.0);
        let all = normalized_adjacency(&g, SelfLoops::All).unwrap().to_dense();
        assert!((all.get(0, 1) - 0.5).abs() < 1e-15);
        assert!((all.get(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degree_info_counts_padding() {
        let g = Graph::from_edges(3, &[(0, 1)], false).unwrap();
        let d = degree_info(&g, SelfLoops::PadIsolated).unwrap();
        assert_eq!(d.degrees, vec![1.0, 1.0, 1.0]);
        let d = degree_info(&g, SelfLoops::All).unwrap();
        assert_eq!(d.degrees, vec![2.0, 2.0, 1.0]);
        assert_eq!(d.d_max, 2.0);
    }

    #[test]
    fn permutation_identity_and_involution() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], false)
            .unwrap()
            .with_features(Matrix::from_fn(4, 2, |i, j| (i * 2 + j) as f64))
            .unwrap();
        assert_eq!(apply_permutation(&g, &Permutation::identity(4)).unwrap(), g);
        let s = Permutation::swap(4, 0, 1);
        let twice = apply_permutation(&apply_permutation(&g, &s).unwrap(), &s).unwrap();
        assert_eq!(twice, g);
        let once = apply_permutation(&g, &s).unwrap();
        assert!(once.has_edge(0, 2) && once.has_edge(0, 1) && !once.has_edge(1, 2));
        assert_eq!(once.features().row(1), g.features().row(0));
    }

    #[test]
    fn complete_graph_is_permutation_invariant() {
        let p = Permutation::new(vec![2, 0, 1]).unwrap();
        let g = apply_permutation(&k3(), &p).unwrap();
        assert_eq!(g.adjacency_dense(), k3().adjacency_dense());
    }

    #[test]
    fn permutation_length_checked() {
        assert_eq!(
            apply_permutation(&k3(), &Permutation::identity(2)),
            Err(Error::LengthMismatch { expected: 3, got: 2 })
        );
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
    }

    #[test]
    fn laplacian_commutes_with_permutation() {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)], false).unwrap();
        let p = Permutation::new(vec![3, 0, 4, 1, 2]).unwrap();
        let lhs = normalized_laplacian(&apply_permutation(&g, &p).unwrap(), SelfLoops::All).unwrap().to_dense();
        let rhs = p.conjugate(&normalized_laplacian(&g, SelfLoops::All).unwrap().to_dense());
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        let pm = p.to_matrix();
        let rhs2 = pm.matmul(&normalized_laplacian(&g, SelfLoops::All).unwrap().to_dense()).matmul(&pm.transpose());
        assert!(lhs.max_abs_diff(&rhs2) < 1e-12);
    }

    #[test]
    fn brute_force_recovers_relabeling() {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (1, 3)], false)
            .unwrap()
            .with_features(Matrix::from_fn(5, 1, |i, _| i as f64))
            .unwrap();
        let p = Permutation::new(vec![4, 2, 0, 3, 1]).unwrap();
        let g2 = apply_permutation(&g, &p).unwrap();
        // g1 = P* g2 P*^T with P* = p^{-1}
        let m = brute_force_match(&g, &g2, SelfLoops::PadIsolated).unwrap();
        assert!(m.distance < 1e-12);
        assert_eq!(m.permutation, p.inverse());
    }

    #[test]
    fn brute_force_identical_graphs_pick_identity() {
        let m = brute_force_match(&k3(), &k3(), SelfLoops::PadIsolated).unwrap();
        assert_eq!(m.distance, 0.0);
        assert_eq!(m.permutation, Permutation::identity(3));
    }

    #[test]
    fn brute_force_one_edge_difference_matches_enumeration() {
        let g1 = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], false).unwrap();
        let g2 = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], false).unwrap();
        let l1 = normalized_laplacian(&g1, SelfLoops::Strict).unwrap().to_dense();
        let l2 = normalized_laplacian(&g2, SelfLoops::Strict).unwrap().to_dense();
        // Oracle: explicit P L2 P^T with permutation matrices for all 24 orderings.
        let mut best = f64::INFINITY;
        let mut perm = vec![0, 1, 2, 3];
        loop {
            let pm = Permutation::new(perm.clone()).unwrap().to_matrix();
            let d = l1.sub(&pm.matmul(&l2).matmul(&pm.transpose())).frobenius_norm();
            best = best.min(d);
            if !next_permutation(&mut perm) {
                break;
            }
        }
        let m = brute_force_match(&g1, &g2, SelfLoops::Strict).unwrap();
        assert!((m.distance - best).abs() < 1e-12);
        assert!(m.distance > 0.1);
    }

    #[test]
    fn brute_force_rejects_large_graphs() {
        let g = cycle(11);
        assert_eq!(
            brute_force_match(&g, &g, SelfLoops::Strict),
            Err(Error::TooLarge { n: 11, max: 10 })
        );
    }

    #[test]
    fn dedup_and_validation() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 0), (0, 1)], false).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert!(Graph::from_edges(3, &[(0, 3)], false).is_err());
        assert!(Graph::from_edges(3, &[(1, 1)], false).is_err());
        let g = Graph::from_edges(3, &[(1, 1), (0, 1)], true).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert!(Graph::from_edges(3, &[], false).unwrap().with_features(Matrix::zeros(2, 1)).is_err());
    }
}
