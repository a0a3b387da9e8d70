//! The PEG layer, the stacked link-prediction model and the executable
//! stability certificate.
//!
//! A PEG layer maps `(A, X, Z)` to `(ψ[(Â ⊙ Ξ) X W], Z)` with
//! `Ξ_uv = φ(‖Z_u - Z_v‖)` evaluated only on stored entries of `Â`.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::factorization::{deepwalk_targets, default_c, line_targets, solve_factorization, FactorizationConfig};
use crate::graph::{
    apply_permutation, brute_force_match, degree_info, normalized_adjacency, CsrPattern, Graph, Permutation,
    SelfLoops,
};
use crate::linalg::{dot, Matrix};
use crate::math;
use crate::nn::{Activation, Mlp};
use crate::procrustes::pe_distance;
use crate::rng::{normal_matrix, random_mapping, random_orthogonal};
use crate::spectral::{eigengap_diagnostics, laplacian_eigenmap, symmetric_eig, PeMethod, PositionalEncoding, SolverConfig};

/// Scalar fed to `φ` for each stored entry `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EdgeWeighting {
    /// `‖Z_u - Z_v‖`.
    #[default]
    Distance,
    /// `Z_u · Z_v`.
    InnerProduct,
}

impl EdgeWeighting {
    pub fn feature(self, z: &Matrix, u: usize, v: usize) -> f64 {
        match self {
            EdgeWeighting::Distance => {
                let s: f64 = z.row(u).iter().zip(z.row(v)).map(|(a, b)| (a - b) * (a - b)).sum();
                math::sqrt(s)
            }
            EdgeWeighting::InnerProduct => dot(z.row(u), z.row(v)),
        }
    }
}

/// `Â` of a graph in the form the layer consumes: a shared sparsity pattern
/// plus the normalized values in storage order.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub pattern: Arc<CsrPattern>,
    pub values: Matrix,
    pub entry_rows: Vec<usize>,
}

impl Propagation {
    pub fn new(g: &Graph, policy: SelfLoops) -> Result<Self> {
        let a = normalized_adjacency(g, policy)?;
        let pattern = a.pattern();
        let entry_rows = pattern.row_of_entries();
        let values = Matrix::from_vec(a.nnz(), 1, a.values().to_vec())?;
        Ok(Self { pattern: Arc::new(pattern), values, entry_rows })
    }

    pub fn num_nodes(&self) -> usize {
        self.pattern.rows
    }

    /// Per-entry `φ` inputs.
    pub fn edge_features(&self, z: &Matrix, weighting: EdgeWeighting) -> Result<Matrix> {
        if z.rows() != self.num_nodes() {
            return Err(Error::LengthMismatch { expected: self.num_nodes(), got: z.rows() });
        }
        let data = self
            .entry_rows
            .iter()
            .zip(&self.pattern.col_idx)
            .map(|(&u, &v)| weighting.feature(z, u, v))
            .collect();
        Matrix::from_vec(self.pattern.nnz(), 1, data)
    }
}

/// `Ξ_uv = φ(feature(Z_u, Z_v))` for each listed pair.
pub fn edge_weights(z: &Matrix, edges: &[(usize, usize)], phi: &Mlp, weighting: EdgeWeighting) -> Result<Vec<f64>> {
    let n = z.rows();
    let mut feats = Vec::with_capacity(edges.len());
    for &(u, v) in edges {
        for x in [u, v] {
            if x >= n {
                return Err(Error::IndexOutOfRange { index: x, len: n });
            }
        }
        feats.push(weighting.feature(z, u, v));
    }
    let out = phi.apply(&Matrix::from_vec(edges.len(), 1, feats)?)?;
    Ok(out.into_vec())
}

/// One PEG layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PegLayer {
    /// `F_in x F_out`.
    pub w: Matrix,
    /// Scalar-to-scalar edge-weight network.
    pub phi: Mlp,
    pub psi: Activation,
    pub weighting: EdgeWeighting,
}

impl PegLayer {
    pub fn in_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols()
    }

    fn check(&self, prop: &Propagation, x: &Matrix) -> Result<()> {
        if x.cols() != self.in_dim() {
            return Err(Error::WidthMismatch { expected: self.in_dim(), got: x.cols() });
        }
        if x.rows() != prop.num_nodes() {
            return Err(Error::LengthMismatch { expected: prop.num_nodes(), got: x.rows() });
        }
        if self.phi.in_dim() != 1 || self.phi.out_dim() != 1 {
            return Err(Error::InvalidArgument("phi must map scalars to scalars"));
        }
        Ok(())
    }

    /// Registers `W` and then `φ`'s parameters.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        let mut vars = alloc::vec![tape.param(self.w.clone())];
        vars.extend(self.phi.register(tape));
        vars
    }

    /// Tape forward; `vars` from [`PegLayer::register`].
    pub fn forward_tape(&self, tape: &mut Tape, vars: &[Var], prop: &Propagation, x: Var, z: &Matrix) -> Result<Var> {
        self.check(prop, tape.value(x))?;
        let feats = tape.constant(prop.edge_features(z, self.weighting)?);
        let xi = self.phi.forward(tape, &vars[1..], feats)?;
        let norm = tape.constant(prop.values.clone());
        let weights = tape.hadamard(norm, xi)?;
        // Aggregate over the narrower side of W.
        let h = if self.in_dim() <= self.out_dim() {
            let agg = tape.spmm(prop.pattern.clone(), weights, x)?;
            tape.matmul(agg, vars[0])?
        } else {
            let xw = tape.matmul(x, vars[0])?;
            tape.spmm(prop.pattern.clone(), weights, xw)?
        };
        Ok(self.psi.on_tape(tape, h))
    }

    /// `(ψ[(Â ⊙ Ξ) X W], Z)` on a prepared propagation operator.
    pub fn forward_prepared(&self, prop: &Propagation, x: &Matrix, z: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = core::iter::once(tape.constant(self.w.clone()))
            .chain(self.phi.parameters().into_iter().map(|p| tape.constant(p.clone())))
            .collect();
        let xv = tape.constant(x.clone());
        let out = self.forward_tape(&mut tape, &vars, prop, xv, z)?;
        Ok(tape.value(out).clone())
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut out = alloc::vec![&self.w];
        out.extend(self.phi.parameters());
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = alloc::vec![&mut self.w];
        out.extend(self.phi.parameters_mut());
        out
    }
}

/// A layer consuming `(A, X, Z)` and returning new `(X, Z)`.
pub trait PeLayer {
    fn forward(&self, g: &Graph, x: &Matrix, z: &Matrix) -> Result<(Matrix, Matrix)>;
}

/// A PEG layer together with the self-loop policy used to build `Â`.
#[derive(Debug, Clone, PartialEq)]
pub struct PegOnGraph {
    pub layer: PegLayer,
    pub self_loops: SelfLoops,
}

impl PeLayer for PegOnGraph {
    fn forward(&self, g: &Graph, x: &Matrix, z: &Matrix) -> Result<(Matrix, Matrix)> {
        peg_forward(&self.layer, g, x, z, self.self_loops)
    }
}

/// `(ψ[(Â ⊙ Ξ) X W], Z)`; `Z` is returned unchanged.
pub fn peg_forward(layer: &PegLayer, g: &Graph, x: &Matrix, z: &Matrix, policy: SelfLoops) -> Result<(Matrix, Matrix)> {
    let prop = Propagation::new(g, policy)?;
    Ok((layer.forward_prepared(&prop, x, z)?, z.clone()))
}

/// Layer that mixes the encoding straight into the node features,
/// `ψ[Â (X + Z V) W]`. It is permutation equivariant but not invariant to
/// rotations of `Z`; kept as a negative control for [`equivariance_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct NaivePeLayer {
    /// `p x F_in`.
    pub v: Matrix,
    pub w: Matrix,
    pub psi: Activation,
    pub self_loops: SelfLoops,
}

impl PeLayer for NaivePeLayer {
    fn forward(&self, g: &Graph, x: &Matrix, z: &Matrix) -> Result<(Matrix, Matrix)> {
        if z.cols() != self.v.rows() || x.cols() != self.v.cols() || x.cols() != self.w.rows() {
            return Err(Error::ShapeMismatch { op: "naive_pe_layer", lhs: x.shape(), rhs: z.shape() });
        }
        let a = normalized_adjacency(g, self.self_loops)?;
        let mixed = x.add(&z.matmul(&self.v));
        Ok((self.psi.apply(&a.mul_dense(&mixed).matmul(&self.w)), z.clone()))
    }
}

/// Largest violation of permutation equivariance and `O(p)` invariance over
/// `trials` random `(P, Q)` draws:
/// `max(‖f(PAP^T, PX, PZ) - P f(A, X, Z)‖_F, ‖f(A, X, ZQ) - f(A, X, Z)‖_F)`,
/// where the `Z` outputs are compared against `PZ` and `ZQ` as well.
pub fn equivariance_check<L: PeLayer, R: Rng + ?Sized>(
    layer: &L,
    g: &Graph,
    x: &Matrix,
    z: &Matrix,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    let n = g.num_nodes();
    let p = z.cols();
    let (x0, z0) = layer.forward(g, x, z)?;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let perm = Permutation::new(random_mapping(rng, n))?;
        let gp = apply_permutation(g, &perm)?;
        let (x1, z1) = layer.forward(&gp, &perm.permute_rows(x), &perm.permute_rows(z))?;
        worst = worst.max(x1.sub(&perm.permute_rows(&x0)).frobenius_norm());
        worst = worst.max(z1.sub(&perm.permute_rows(&z0)).frobenius_norm());
        let q = random_orthogonal(rng, p);
        let zq = z.matmul(&q);
        let (x2, z2) = layer.forward(g, x, &zq)?;
        worst = worst.max(x2.sub(&x0).frobenius_norm());
        worst = worst.max(z2.sub(&z0.matmul(&q)).frobenius_norm());
    }
    Ok(worst)
}

/// Which positional encoding the model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PeKind {
    #[default]
    LaplacianEigenmap,
    DeepWalk,
    Line,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PeConfig {
    pub kind: PeKind,
    pub dim: usize,
    /// DeepWalk window.
    pub window: usize,
    pub self_loops: SelfLoops,
    pub solver: SolverConfig,
    pub factorization: FactorizationConfig,
    pub seed: u64,
    /// Multiplies the encoding by `√N` so entries are `O(1)` regardless of
    /// graph size. A scalar multiple keeps both equivariances intact.
    pub sqrt_n_scaling: bool,
}

impl Default for PeConfig {
    fn default() -> Self {
        Self {
            kind: PeKind::LaplacianEigenmap,
            dim: 8,
            window: 5,
            self_loops: SelfLoops::PadIsolated,
            solver: SolverConfig::default(),
            factorization: FactorizationConfig::default(),
            seed: 0,
            sqrt_n_scaling: false,
        }
    }
}

// Adds a unit self-loop to isolated nodes so degree-based targets exist.
fn pad_isolated(g: &Graph) -> Result<Graph> {
    let mut edges = g.edges();
    let isolated: Vec<usize> = (0..g.num_nodes()).filter(|&u| g.degree(u) == 0).collect();
    if isolated.is_empty() {
        return Ok(g.clone());
    }
    edges.extend(isolated.into_iter().map(|u| (u, u)));
    Graph::from_edges(g.num_nodes(), &edges, true)?.with_features(g.features().clone())
}

/// Positional encoding of `g` under `cfg`.
pub fn compute_pe(g: &Graph, cfg: &PeConfig) -> Result<PositionalEncoding> {
    let mut pe = compute_raw_pe(g, cfg)?;
    if cfg.sqrt_n_scaling {
        pe.z = pe.z.scale(math::sqrt(g.num_nodes() as f64));
    }
    Ok(pe)
}

fn compute_raw_pe(g: &Graph, cfg: &PeConfig) -> Result<PositionalEncoding> {
    match cfg.kind {
        PeKind::LaplacianEigenmap => laplacian_eigenmap(g, cfg.dim, cfg.self_loops, &cfg.solver),
        PeKind::DeepWalk | PeKind::Line => {
            let padded = pad_isolated(g)?;
            let c = default_c(g);
            let obj = if cfg.kind == PeKind::DeepWalk {
                deepwalk_targets(&padded, cfg.window, c)?
            } else {
                line_targets(&padded, c)?
            };
            let out = solve_factorization(&obj, cfg.dim, cfg.seed, &cfg.factorization)?;
            Ok(PositionalEncoding::from_matrix(out.z, PeMethod::Factorization))
        }
    }
}

/// How `(X̂, Z)` rows of a node pair are combined before the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DecoderKind {
    /// `(X̂_u · X̂_v, Z_u · Z_v)`, two scalars.
    #[default]
    InnerProduct,
    /// `(X̂_u ⊙ X̂_v, Z_u ⊙ Z_v)`, width `F + p`.
    Hadamard,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ModelConfig {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub psi: Activation,
    pub phi_hidden: usize,
    pub phi_bias: bool,
    /// Operator-norm cap applied to every `φ` weight after each update.
    pub phi_lipschitz_cap: Option<f64>,
    pub decoder_hidden: Vec<usize>,
    pub decoder_kind: DecoderKind,
    pub weighting: EdgeWeighting,
    pub self_loops: SelfLoops,
    pub pe: PeConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_dim: 1,
            hidden_dim: 128,
            num_layers: 2,
            psi: Activation::Relu,
            phi_hidden: 32,
            phi_bias: true,
            phi_lipschitz_cap: None,
            decoder_hidden: alloc::vec![32],
            decoder_kind: DecoderKind::InnerProduct,
            weighting: EdgeWeighting::Distance,
            self_loops: SelfLoops::All,
            pe: PeConfig::default(),
        }
    }
}

/// Stacked PEG layers and a pair decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PegModel {
    pub config: ModelConfig,
    pub layers: Vec<PegLayer>,
    pub decoder: Mlp,
}

/// Node representations from one forward pass, ready for pair scoring.
#[derive(Debug, Clone)]
pub struct NodeStates {
    pub h: Matrix,
    pub z: Matrix,
}

impl PegModel {
    pub fn new<R: Rng + ?Sized>(cfg: ModelConfig, rng: &mut R) -> Result<Self> {
        if cfg.num_layers == 0 || cfg.in_dim == 0 || cfg.hidden_dim == 0 {
            return Err(Error::InvalidArgument("model widths and depth must be positive"));
        }
        let mut layers = Vec::with_capacity(cfg.num_layers);
        let mut width = cfg.in_dim;
        for _ in 0..cfg.num_layers {
            let w = normal_matrix(rng, width, cfg.hidden_dim, math::sqrt(2.0 / (width + cfg.hidden_dim) as f64));
            let mut phi = Mlp::new(rng, &[1, cfg.phi_hidden, 1], Activation::Tanh, Activation::Identity, cfg.phi_bias)?;
            if let Some(cap) = cfg.phi_lipschitz_cap {
                phi = phi.with_lipschitz_cap(cap);
            }
            layers.push(PegLayer { w, phi, psi: cfg.psi, weighting: cfg.weighting });
            width = cfg.hidden_dim;
        }
        let dec_in = match cfg.decoder_kind {
            DecoderKind::InnerProduct => 2,
            DecoderKind::Hadamard => cfg.hidden_dim + cfg.pe.dim,
        };
        let mut dims = alloc::vec![dec_in];
        dims.extend(&cfg.decoder_hidden);
        dims.push(1);
        let decoder = Mlp::new(rng, &dims, Activation::Relu, Activation::Identity, true)?;
        Ok(Self { config: cfg, layers, decoder })
    }

    pub fn propagation(&self, g: &Graph) -> Result<Propagation> {
        Propagation::new(g, self.config.self_loops)
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.parameters());
        }
        out.extend(self.decoder.parameters());
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.extend(l.parameters_mut());
        }
        out.extend(self.decoder.parameters_mut());
        out
    }

    /// Stable names matching [`PegModel::parameters`] order.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push(format!("layer{i}.w"));
            for (j, d) in l.phi.layers.iter().enumerate() {
                out.push(format!("layer{i}.phi.{j}.weight"));
                if d.bias.is_some() {
                    out.push(format!("layer{i}.phi.{j}.bias"));
                }
            }
        }
        for (j, d) in self.decoder.layers.iter().enumerate() {
            out.push(format!("decoder.{j}.weight"));
            if d.bias.is_some() {
                out.push(format!("decoder.{j}.bias"));
            }
        }
        out
    }

    /// Re-applies the `φ` operator-norm caps.
    pub fn enforce_constraints(&mut self) {
        for l in &mut self.layers {
            l.phi.enforce_lipschitz();
        }
    }

    /// Registers every parameter on the tape, in [`PegModel::parameters`] order.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.register(tape));
        }
        out.extend(self.decoder.register(tape));
        out
    }

    fn layer_var_ranges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut k = 0;
        for l in &self.layers {
            let n = 1 + l.phi.parameters().len();
            out.push((k, k + n));
            k += n;
        }
        out.push((k, k + self.decoder.parameters().len()));
        out
    }

    /// Node states on the tape.
    pub fn encode_tape(&self, tape: &mut Tape, vars: &[Var], prop: &Propagation, x: &Matrix, z: &Matrix) -> Result<Var> {
        let ranges = self.layer_var_ranges();
        let mut h = tape.constant(x.clone());
        for (l, &(a, b)) in self.layers.iter().zip(&ranges) {
            h = l.forward_tape(tape, &vars[a..b], prop, h, z)?;
        }
        Ok(h)
    }

    /// Logits (`B x 1`) for node pairs given node states on the tape.
    pub fn decode_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        h: Var,
        z: &Matrix,
        pairs: &[(usize, usize)],
    ) -> Result<Var> {
        let ranges = self.layer_var_ranges();
        let (a, b) = ranges[ranges.len() - 1];
        let us = Arc::new(pairs.iter().map(|e| e.0).collect::<Vec<_>>());
        let vs = Arc::new(pairs.iter().map(|e| e.1).collect::<Vec<_>>());
        let hu = tape.gather_rows(h, us.clone())?;
        let hv = tape.gather_rows(h, vs.clone())?;
        let zc = tape.constant(z.clone());
        let zu = tape.gather_rows(zc, us)?;
        let zv = tape.gather_rows(zc, vs)?;
        let feats = match self.config.decoder_kind {
            DecoderKind::InnerProduct => {
                let hx = tape.row_dot(hu, hv)?;
                let hz = tape.row_dot(zu, zv)?;
                tape.concat_cols(hx, hz)?
            }
            DecoderKind::Hadamard => {
                let hx = tape.hadamard(hu, hv)?;
                let hz = tape.hadamard(zu, zv)?;
                tape.concat_cols(hx, hz)?
            }
        };
        self.decoder.forward(tape, &vars[a..b], feats)
    }

    /// Node states without gradient tracking.
    pub fn encode(&self, prop: &Propagation, x: &Matrix, z: &Matrix) -> Result<NodeStates> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.parameters().into_iter().map(|p| tape.constant(p.clone())).collect();
        let h = self.encode_tape(&mut tape, &vars, prop, x, z)?;
        Ok(NodeStates { h: tape.value(h).clone(), z: z.clone() })
    }

    /// Logits for many pairs.
    pub fn score_pairs(&self, states: &NodeStates, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.parameters().into_iter().map(|p| tape.constant(p.clone())).collect();
        let h = tape.constant(states.h.clone());
        let out = self.decode_tape(&mut tape, &vars, h, &states.z, pairs)?;
        Ok(tape.value(out).data().to_vec())
    }
}

/// Decoder logit for one pair.
pub fn link_logit(model: &PegModel, states: &NodeStates, u: usize, v: usize) -> Result<f64> {
    let n = states.h.rows();
    for x in [u, v] {
        if x >= n {
            return Err(Error::IndexOutOfRange { index: x, len: n });
        }
    }
    Ok(model.score_pairs(states, &[(u, v)])?[0])
}

/// Measured and certified sides of the stability inequality for one pair of
/// graphs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StabilityCertificate {
    pub delta: f64,
    pub x_opnorm: f64,
    pub d_max: f64,
    pub lipschitz_psi: f64,
    pub lipschitz_phi: f64,
    pub w_opnorm: f64,
    pub constant_c: f64,
    pub graph_distance: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub phi_at_zero: f64,
}

/// Runs the layer on both graphs with Laplacian-eigenmap encodings and checks
/// `‖X̂1 - P* X̂2‖_F + η(Z1, P* Z2) ≤ C d(G1, G2)` with
/// `C = (7δ‖X1‖_op + 2 d_max(G2)) ℓ_ψ ℓ_φ ‖W‖_op + 3δ`.
///
/// `P*` comes from exhaustive matching, so both graphs must be tiny. Every
/// operator (`Â`, `L`, the encodings and `d_max`) is built under the same
/// self-loop policy.
pub fn verify_stability(layer: &PegLayer, g1: &Graph, g2: &Graph, p: usize, policy: SelfLoops) -> Result<StabilityCertificate> {
    if layer.phi.lipschitz_cap.is_none() {
        return Err(Error::UnboundedPhi);
    }
    let matched = brute_force_match(g1, g2, policy)?;
    let perm = &matched.permutation;
    let solver = SolverConfig::default();
    let mut delta = f64::INFINITY;
    for g in [g1, g2] {
        let eig = symmetric_eig(&crate::graph::normalized_laplacian(g, policy)?.to_dense())?;
        delta = delta.min(eigengap_diagnostics(&eig.eigenvalues, p)?.delta);
    }
    if !delta.is_finite() {
        return Err(Error::ZeroEigengap);
    }
    let z1 = laplacian_eigenmap(g1, p, policy, &solver)?.z;
    let z2 = laplacian_eigenmap(g2, p, policy, &solver)?.z;
    let (x1, x2) = (g1.features(), g2.features());
    let (h1, _) = peg_forward(layer, g1, x1, &z1, policy)?;
    let (h2, _) = peg_forward(layer, g2, x2, &z2, policy)?;
    let lhs = h1.sub(&perm.permute_rows(&h2)).frobenius_norm() + pe_distance(&z1, &perm.permute_rows(&z2))?;
    let x_opnorm = x1.operator_norm();
    let d_max = degree_info(g2, policy)?.d_max;
    let lipschitz_psi = layer.psi.lipschitz();
    let lipschitz_phi = layer.phi.lipschitz_bound();
    let w_opnorm = layer.w.operator_norm();
    let constant_c = (7.0 * delta * x_opnorm + 2.0 * d_max) * lipschitz_psi * lipschitz_phi * w_opnorm + 3.0 * delta;
    let rhs = constant_c * matched.distance;
    Ok(StabilityCertificate {
        delta,
        x_opnorm,
        d_max,
        lipschitz_psi,
        lipschitz_phi,
        w_opnorm,
        constant_c,
        graph_distance: matched.distance,
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-8,
        phi_at_zero: layer.phi.eval_scalar(0.0),
    })
}
