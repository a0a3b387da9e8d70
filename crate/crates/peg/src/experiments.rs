//! End-to-end drivers: spectral diagnostics, the SBM link-prediction
//! benchmark, perturbation sweeps and cross-graph evaluation.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use peg_core::graph::normalized_laplacian;
use peg_core::linkpred::{
    evaluate_tasks, perturb_graph_excluding, sample_negatives, train_tasks, LinkTask, Metric, PerturbMode, TrainConfig,
    TrainOutcome,
};
use peg_core::peg::{ModelConfig, PegModel};
use peg_core::rng::seeded;
use peg_core::sbm::{sbm_generate, FeatureMode, SbmConfig};
use peg_core::spectral::{eigengap_diagnostics, smallest_eigenpairs, EigengapDiagnostics, SolverConfig};
use peg_core::{Graph, Matrix, Result, SelfLoops};
use rand::seq::SliceRandom;

use crate::io::{IoError, IoResult};

/// Eigengap diagnostics for `p = 1..=p_max` of the normalized Laplacian.
pub fn diagnose(g: &Graph, p_max: usize, policy: SelfLoops, solver: &SolverConfig) -> Result<Vec<EigengapDiagnostics>> {
    let n = g.num_nodes();
    if p_max == 0 || p_max >= n {
        return Err(peg_core::Error::BadDimension { p: p_max, n });
    }
    let l = normalized_laplacian(g, policy)?;
    let eig = smallest_eigenpairs(&l, p_max + 1, solver)?;
    (1..=p_max).map(|p| eigengap_diagnostics(&eig.eigenvalues, p)).collect()
}

/// CSV with columns `p,lambda_p,gap_p,rho_p`.
pub fn write_diagnostics_csv(path: &Path, rows: &[EigengapDiagnostics]) -> IoResult<()> {
    let io = |source| IoError::Io { path: path.to_path_buf(), source };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "p,lambda_p,gap_p,rho_p").map_err(io)?;
    for r in rows {
        writeln!(w, "{},{:?},{:?},{:?}", r.p, r.lambda_p, r.gap_p, r.stability_ratio).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Two disjoint random blocks, so the Laplacian has eigenvalue 0 twice.
pub fn two_component_graph(size: usize, p_within: f64, seed: u64) -> Result<Graph> {
    sbm_generate(&SbmConfig { blocks: vec![size, size], p_within, p_between: 0.0, seed, feature_mode: FeatureMode::Degree })
}

/// Degrees divided by the mean degree, one column.
pub fn scaled_degree_features(g: &Graph) -> Matrix {
    let n = g.num_nodes().max(1) as f64;
    let mean = (2 * g.num_edges()) as f64 / n;
    let scale = if mean > 0.0 { mean } else { 1.0 };
    Matrix::from_fn(g.num_nodes(), 1, |u, _| g.degree(u) as f64 / scale)
}

/// A generated graph with held-out intra-block positives and uniformly drawn
/// missing-pair negatives. Messages pass over `message`, which lacks the
/// positives and carries structural features computed on itself.
#[derive(Debug, Clone)]
pub struct HeldOutGraph {
    pub graph: Graph,
    pub message: Graph,
    pub pos: Vec<(usize, usize)>,
    pub neg: Vec<(usize, usize)>,
}

impl HeldOutGraph {
    pub fn task(&self, model: &PegModel) -> Result<LinkTask> {
        LinkTask::new(model, &self.message, &self.pos, &self.neg)
    }

    /// Pairs that must never become message edges.
    pub fn held_out(&self) -> BTreeSet<(usize, usize)> {
        self.pos.iter().chain(&self.neg).copied().collect()
    }
}

/// Samples `round(fraction |E|)` intra-block edges as positives and as many
/// negatives.
pub fn sbm_held_out(cfg: &SbmConfig, fraction: f64) -> Result<HeldOutGraph> {
    let graph = sbm_generate(cfg)?;
    let block = cfg.block_of();
    let mut intra: Vec<(usize, usize)> = graph.edges().into_iter().filter(|&(u, v)| block[u] == block[v]).collect();
    let mut rng = seeded(cfg.seed ^ 0x5eed0f114c5);
    intra.shuffle(&mut rng);
    let count = ((fraction * graph.num_edges() as f64).round() as usize).min(intra.len());
    intra.truncate(count);
    let neg = sample_negatives(&graph, count, &BTreeSet::new(), &mut rng)?;
    let message = graph.without_edges(&intra);
    let message = message.clone().with_features(scaled_degree_features(&message))?;
    Ok(HeldOutGraph { graph, message, pos: intra, neg })
}

#[derive(Debug, Clone)]
pub struct SbmBenchmark {
    pub sbm: SbmConfig,
    pub positive_fraction: f64,
    pub train_graphs: usize,
    pub val_graphs: usize,
    pub test_graphs: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for SbmBenchmark {
    fn default() -> Self {
        let mut model = ModelConfig { in_dim: 1, ..ModelConfig::default() };
        // Two blocks: only the leading two eigenvectors carry block structure.
        model.pe.dim = 2;
        model.pe.sqrt_n_scaling = true;
        model.phi_hidden = 8;
        model.pe.solver = SolverConfig { dense_cutoff: 500, max_krylov: 0 };
        Self {
            sbm: SbmConfig::two_blocks(0),
            positive_fraction: 0.1,
            train_graphs: 1,
            val_graphs: 10,
            test_graphs: 10,
            model,
            train: TrainConfig { epochs: 30, batch_size: 65536, ..TrainConfig::default() },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SbmRun {
    pub outcome: TrainOutcome,
    pub test_graphs: Vec<HeldOutGraph>,
    /// One ROC-AUC per test graph.
    pub test_auc: Vec<f64>,
}

impl SbmRun {
    pub fn mean_auc(&self) -> f64 {
        self.test_auc.iter().sum::<f64>() / self.test_auc.len().max(1) as f64
    }
}

/// Trains on freshly generated graphs and scores every test graph. Graph
/// seeds derive from `seed`; the model initialization and batching use it
/// too.
pub fn run_sbm_benchmark(bench: &SbmBenchmark, seed: u64) -> Result<SbmRun> {
    let graph_cfg = |role: u64, i: usize| SbmConfig { seed: seed.wrapping_mul(1_000_003).wrapping_add(role * 10_000 + i as u64), ..bench.sbm.clone() };
    let make = |role: u64, count: usize| -> Result<Vec<HeldOutGraph>> {
        (0..count).map(|i| sbm_held_out(&graph_cfg(role, i), bench.positive_fraction)).collect()
    };
    let model = PegModel::new(bench.model.clone(), &mut seeded(seed))?;
    let train: Vec<LinkTask> = make(1, bench.train_graphs)?.iter().map(|g| g.task(&model)).collect::<Result<_>>()?;
    let val: Vec<LinkTask> = make(2, bench.val_graphs)?.iter().map(|g| g.task(&model)).collect::<Result<_>>()?;
    let cfg = TrainConfig { seed, ..bench.train.clone() };
    let outcome = train_tasks(&model, &[train], &val, &cfg)?;
    let test_graphs = make(3, bench.test_graphs)?;
    let test_auc = test_graphs
        .iter()
        .map(|g| evaluate_tasks(&outcome.model, &[g.task(&outcome.model)?], Metric::RocAuc))
        .collect::<Result<_>>()?;
    Ok(SbmRun { outcome, test_graphs, test_auc })
}

/// Mean test ROC-AUC after perturbing each message graph at every fraction.
/// Encodings and structural features are recomputed on the perturbed graph;
/// added edges never touch held-out pairs.
pub fn perturbation_sweep(
    model: &PegModel,
    graphs: &[HeldOutGraph],
    mode: PerturbMode,
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    fractions
        .iter()
        .map(|&f| {
            let mut total = 0.0;
            for (i, g) in graphs.iter().enumerate() {
                let perturbed = perturb_graph_excluding(&g.message, mode, f, seed.wrapping_add(i as u64), &g.held_out())?;
                let perturbed = perturbed.clone().with_features(scaled_degree_features(&perturbed))?;
                let task = LinkTask::new(model, &perturbed, &g.pos, &g.neg)?;
                total += evaluate_tasks(model, &[task], Metric::RocAuc)?;
            }
            Ok((f, total / graphs.len().max(1) as f64))
        })
        .collect()
}
