//! Stochastic block model graphs.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::rng::{normal_matrix, seeded};

/// Node features attached to generated graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FeatureMode {
    /// Zero-width features.
    None,
    /// One column holding each node's degree.
    #[default]
    Degree,
    /// Standard-normal features of the given width.
    Random(usize),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SbmConfig {
    pub blocks: Vec<usize>,
    pub p_within: f64,
    pub p_between: f64,
    pub seed: u64,
    pub feature_mode: FeatureMode,
}

impl SbmConfig {
    /// Two blocks of 500 nodes, 0.3 inside and 0.1 across.
    pub fn two_blocks(seed: u64) -> Self {
        Self { blocks: alloc::vec![500, 500], p_within: 0.3, p_between: 0.1, seed, feature_mode: FeatureMode::Degree }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() || self.blocks.contains(&0) {
            return Err(Error::InvalidArgument("block sizes must be positive"));
        }
        for q in [self.p_within, self.p_between] {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::InvalidArgument("link probabilities must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.blocks.iter().sum()
    }

    /// Block index of every node; blocks occupy consecutive index ranges.
    pub fn block_of(&self) -> Vec<usize> {
        self.blocks.iter().enumerate().flat_map(|(b, &size)| core::iter::repeat_n(b, size)).collect()
    }
}

/// Samples every pair independently: `p_within` inside a block, `p_between`
/// across blocks. No self-loops.
pub fn sbm_generate(cfg: &SbmConfig) -> Result<Graph> {
    cfg.validate()?;
    let n = cfg.num_nodes();
    let block = cfg.block_of();
    let mut rng = seeded(cfg.seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let q = if block[u] == block[v] { cfg.p_within } else { cfg.p_between };
            if rng.gen::<f64>() < q {
                edges.push((u, v));
            }
        }
    }
    let g = Graph::from_edges(n, &edges, false)?;
    let features = match cfg.feature_mode {
        FeatureMode::None => Matrix::zeros(n, 0),
        FeatureMode::Degree => degree_features(&g),
        FeatureMode::Random(d) => normal_matrix(&mut rng, n, d, 1.0),
    };
    g.with_features(features)
}

/// `N x 1` column of node degrees.
pub fn degree_features(g: &Graph) -> Matrix {
    Matrix::from_fn(g.num_nodes(), 1, |u, _| g.degree(u) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_complete() {
        let cfg = SbmConfig { blocks: alloc::vec![5, 5], p_within: 0.0, p_between: 0.0, seed: 1, feature_mode: FeatureMode::None };
        assert_eq!(sbm_generate(&cfg).unwrap().num_edges(), 0);
        let cfg = SbmConfig { blocks: alloc::vec![4], p_within: 1.0, p_between: 0.0, seed: 1, feature_mode: FeatureMode::Degree };
        let g = sbm_generate(&cfg).unwrap();
        assert_eq!(g.num_edges(), 6);
        assert!(g.features().data().iter().all(|&d| d == 3.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SbmConfig { blocks: alloc::vec![20, 30], p_within: 0.3, p_between: 0.1, seed: 7, feature_mode: FeatureMode::Random(3) };
        assert_eq!(sbm_generate(&cfg).unwrap(), sbm_generate(&cfg).unwrap());
        let other = SbmConfig { seed: 8, ..cfg.clone() };
        assert_ne!(sbm_generate(&cfg).unwrap(), sbm_generate(&other).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SbmConfig { blocks: alloc::vec![3, 0], p_within: 0.3, p_between: 0.1, seed: 0, feature_mode: FeatureMode::None };
        assert!(sbm_generate(&cfg).is_err());
        let cfg = SbmConfig { blocks: alloc::vec![3], p_within: 1.3, p_between: 0.1, seed: 0, feature_mode: FeatureMode::None };
        assert!(sbm_generate(&cfg).is_err());
    }
}
