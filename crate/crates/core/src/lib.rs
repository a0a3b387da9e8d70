//! Core numerics for graph neural networks that consume positional encodings.
//!
//! The crate is `no_std` and only needs `alloc`. It contains:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`graph`] | CSR graphs, normalized adjacency/Laplacian, permutations, exhaustive graph matching |
//! | [`spectral`] | symmetric eigensolvers, Laplacian eigenmaps, eigengap diagnostics, eigenvector perturbation tools |
//! | [`procrustes`] | matching of positional encodings over the orthogonal group and over sign flips |
//! | [`factorization`] | LINE / DeepWalk matrix-factorization encodings |
//! | [`autodiff`] | a small reverse-mode tape over dense matrices |
//! | [`nn`] | MLPs, Lipschitz tracking, BCE loss, Adam |
//! | [`peg`] | the PEG layer, the link decoder and stability verification |
//! | [`linkpred`] | link splits, fold rotation, training, metrics, perturbations |
//! | [`sbm`] | stochastic block model generator |
//!
//! File formats, the CLI and experiment drivers live in the companion `peg` crate.
#![no_std]
#![warn(missing_debug_implementations, rust_2018_idioms)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod error;
pub mod factorization;
pub mod graph;
pub mod linalg;
pub mod linkpred;
pub(crate) mod math;
pub mod nn;
pub mod peg;
pub mod procrustes;
pub mod rng;
pub mod sbm;
pub mod spectral;

pub use error::{Error, Result};
pub use graph::{Graph, Permutation, SelfLoops};
pub use linalg::Matrix;
