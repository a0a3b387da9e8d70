use thiserror::Error;

/// Errors raised by the core numerics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("node {node} has zero degree and self-loop padding is disabled")]
    IsolatedNode { node: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("index {index} out of range for {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("exhaustive search over {n} nodes exceeds the limit of {max}")]
    TooLarge { n: usize, max: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("{what} did not converge after {iterations} iterations")]
    ConvergenceFailure {
        what: &'static str,
        iterations: usize,
    },
    #[error("bad dimension p = {p} for {n} nodes")]
    BadDimension { p: usize, n: usize },
    #[error("need at least {needed} eigenvalues, got {got}")]
    TooFewEigenvalues { needed: usize, got: usize },
    #[error("eigenvalues {index} and {next} coincide within tolerance")]
    MultipleEigenvalues { index: usize, next: usize },
    #[error("perturbation size {eps} outside (0, 0.05]")]
    EpsTooLarge { eps: f64 },
    #[error("eigengap at p is zero; delta is infinite")]
    ZeroEigengap,
    #[error("phi must be Lipschitz constrained to certify stability")]
    UnboundedPhi,
    #[error("both classes must be present")]
    SingleClass,
    #[error("need at least {k} negative scores, got {got}")]
    TooFewNegatives { k: usize, got: usize },
    #[error("not enough edges: need {needed}, graph has {got}")]
    NotEnoughEdges { needed: usize, got: usize },
    #[error("negative sampling exhausted after {attempts} rejections")]
    NegativeSamplingExhausted { attempts: usize },
    #[error("feature width mismatch: model expects {expected}, graph has {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
