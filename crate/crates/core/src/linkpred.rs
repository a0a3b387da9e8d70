//! Link splits, fold rotation, the training loop, ranking metrics, structural
//! perturbations and cross-graph evaluation.

use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::math;
use crate::nn::{Adam, AdamConfig, Mlp};
use crate::peg::{compute_pe, EdgeWeighting, PegModel, Propagation};
use crate::rng::{normal_matrix, seeded};

type Pair = (usize, usize);

fn ordered((u, v): Pair) -> Pair {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Positive and negative link sets for training, model selection and test.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkDataset {
    pub base_graph: Graph,
    /// `base_graph` restricted to `train_pos`; messages pass over this graph.
    pub train_graph: Graph,
    pub train_pos: Vec<Pair>,
    pub val_pos: Vec<Pair>,
    pub test_pos: Vec<Pair>,
    pub train_neg: Vec<Pair>,
    pub val_neg: Vec<Pair>,
    pub test_neg: Vec<Pair>,
    /// Fold index of each training positive (and of the negative at the same
    /// position) once [`fold_partition`] ran.
    pub fold_of_train_edge: Option<Vec<usize>>,
}

/// Draws `count` distinct node pairs `u < v` that are not edges of `g` and
/// not in `exclude`, by seeded rejection sampling. Gives up after
/// `100 * count` rejections.
pub fn sample_negatives<R: Rng + ?Sized>(g: &Graph, count: usize, exclude: &BTreeSet<Pair>, rng: &mut R) -> Result<Vec<Pair>> {
    let n = g.num_nodes();
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    if n < 2 {
        return Err(Error::NegativeSamplingExhausted { attempts: 0 });
    }
    let mut taken = BTreeSet::new();
    let budget = 100 * count;
    let mut rejections = 0;
    while out.len() < count {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        let pair = ordered((u, v));
        if u == v || g.has_edge(u, v) || exclude.contains(&pair) || !taken.insert(pair) {
            rejections += 1;
            if rejections >= budget {
                return Err(Error::NegativeSamplingExhausted { attempts: rejections });
            }
            continue;
        }
        out.push(pair);
    }
    Ok(out)
}

/// Shuffles the non-loop edges of `g` into train/validation/test positives
/// and pairs each set with as many uniformly drawn missing pairs.
pub fn split_links(g: &Graph, ratios: (f64, f64, f64), seed: u64) -> Result<LinkDataset> {
    let (rt, rv, rs) = ratios;
    if [rt, rv, rs].iter().any(|r| !(0.0..=1.0).contains(r)) || math::abs(rt + rv + rs - 1.0) > 1e-9 {
        return Err(Error::InvalidArgument("split ratios must be in [0, 1] and sum to 1"));
    }
    let mut edges: Vec<Pair> = g.edges().into_iter().filter(|(u, v)| u != v).collect();
    let m = edges.len();
    let wanted = [rt, rv, rs].iter().filter(|&&r| r > 0.0).count();
    if m < wanted.max(1) {
        return Err(Error::NotEnoughEdges { needed: wanted.max(1), got: m });
    }
    let mut rng = seeded(seed);
    edges.shuffle(&mut rng);
    let n_val = math::round(rv * m as f64) as usize;
    let n_test = (math::round(rs * m as f64) as usize).min(m - n_val);
    let n_train = m - n_val - n_test;
    let test_pos = edges[..n_test].to_vec();
    let val_pos = edges[n_test..n_test + n_val].to_vec();
    let train_pos = edges[n_test + n_val..].to_vec();
    debug_assert_eq!(train_pos.len(), n_train);

    let negatives = sample_negatives(g, m, &BTreeSet::new(), &mut rng)?;
    let test_neg = negatives[..n_test].to_vec();
    let val_neg = negatives[n_test..n_test + n_val].to_vec();
    let train_neg = negatives[n_test + n_val..].to_vec();
    let train_graph = g.with_edge_set(&train_pos)?;
    Ok(LinkDataset {
        base_graph: g.clone(),
        train_graph,
        train_pos,
        val_pos,
        test_pos,
        train_neg,
        val_neg,
        test_neg,
        fold_of_train_edge: None,
    })
}

/// One graph view with labelled pairs: messages pass over `prop`, the model
/// reads `features` and `pe`, and `pairs[i]` carries `labels[i]`.
#[derive(Debug, Clone)]
pub struct LinkTask {
    pub prop: Propagation,
    pub features: Matrix,
    pub pe: Matrix,
    pub pairs: Vec<Pair>,
    pub labels: Vec<f64>,
}

impl LinkTask {
    /// Computes the model's encoding on `message_graph` and attaches
    /// positives then negatives.
    pub fn new(model: &PegModel, message_graph: &Graph, pos: &[Pair], neg: &[Pair]) -> Result<Self> {
        let pe = compute_pe(message_graph, &model.config.pe)?.z;
        Self::with_pe(model, message_graph, pe, pos, neg)
    }

    pub fn with_pe(model: &PegModel, message_graph: &Graph, pe: Matrix, pos: &[Pair], neg: &[Pair]) -> Result<Self> {
        let n = message_graph.num_nodes();
        if pe.rows() != n {
            return Err(Error::LengthMismatch { expected: n, got: pe.rows() });
        }
        for &(u, v) in pos.iter().chain(neg) {
            for x in [u, v] {
                if x >= n {
                    return Err(Error::IndexOutOfRange { index: x, len: n });
                }
            }
        }
        let mut pairs = pos.to_vec();
        pairs.extend_from_slice(neg);
        let mut labels = alloc::vec![1.0; pos.len()];
        labels.resize(pairs.len(), 0.0);
        Ok(Self { prop: model.propagation(message_graph)?, features: message_graph.features().clone(), pe, pairs, labels })
    }

    pub fn scores(&self, model: &PegModel) -> Result<Vec<f64>> {
        let states = model.encode(&self.prop, &self.features, &self.pe)?;
        model.score_pairs(&states, &self.pairs)
    }
}

/// Training-link fold structure: `tasks[j]` supervises on fold `j` while
/// messages and encodings use the training graph without fold `j`.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
    pub tasks: Vec<LinkTask>,
}

/// Deals training positives (and their paired negatives) round-robin into `k`
/// balanced folds after a seeded shuffle, then precomputes one task per fold.
/// Nodes left without edges fall back to the self-loop policy of the model.
pub fn fold_partition(model: &PegModel, ds: &mut LinkDataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::InvalidArgument("fold count must be positive"));
    }
    if ds.train_pos.is_empty() {
        return Err(Error::NotEnoughEdges { needed: 1, got: 0 });
    }
    let mut order: Vec<usize> = (0..ds.train_pos.len()).collect();
    order.shuffle(&mut seeded(seed));
    let mut fold_of = alloc::vec![0; order.len()];
    let mut folds = alloc::vec![Vec::new(); k];
    for (slot, &i) in order.iter().enumerate() {
        fold_of[i] = slot % k;
        folds[slot % k].push(i);
    }
    let mut tasks = Vec::with_capacity(k);
    for members in &folds {
        let pos: Vec<Pair> = members.iter().map(|&i| ds.train_pos[i]).collect();
        let neg: Vec<Pair> = members.iter().filter_map(|&i| ds.train_neg.get(i).copied()).collect();
        let graph = ds.train_graph.without_edges(&pos);
        tasks.push(LinkTask::new(model, &graph, &pos, &neg)?);
    }
    ds.fold_of_train_edge = Some(fold_of);
    Ok(FoldPlan { folds, tasks })
}

/// Model-selection metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Metric {
    #[default]
    RocAuc,
    HitsAtK(usize),
}

impl Metric {
    pub fn evaluate(self, scores: &[f64], labels: &[f64]) -> Result<f64> {
        match self {
            Metric::RocAuc => {
                let flags: Vec<bool> = labels.iter().map(|&y| y > 0.5).collect();
                roc_auc(scores, &flags)
            }
            Metric::HitsAtK(k) => {
                let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y > 0.5).map(|(s, _)| *s).collect();
                let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y <= 0.5).map(|(s, _)| *s).collect();
                hits_at_k(&pos, &neg, k)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Number of folds for rotating supervision links; `0` trains plainly.
    pub folds: usize,
    pub metric: Metric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, batch_size: 64, adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() }, seed: 0, folds: 0, metric: Metric::RocAuc }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation metric.
    pub model: PegModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Concatenated scores and labels of several tasks under `metric`.
pub fn evaluate_tasks(model: &PegModel, tasks: &[LinkTask], metric: Metric) -> Result<f64> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for t in tasks {
        scores.extend(t.scores(model)?);
        labels.extend_from_slice(&t.labels);
    }
    metric.evaluate(&scores, &labels)
}

/// Minibatch BCE training with Adam. Epoch `e` runs over every task of
/// `schedule[e % schedule.len()]`; pairs are reshuffled each epoch. After
/// every epoch `val` is scored and the parameters with the best value are
/// kept, ties going to the earliest epoch.
pub fn train_tasks(model: &PegModel, schedule: &[Vec<LinkTask>], val: &[LinkTask], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive"));
    }
    let mut current = model.clone();
    let mut best = model.clone();
    let mut best_metric = f64::NEG_INFINITY;
    let mut best_epoch = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 {
        return Ok(TrainOutcome { model: best, history, best_epoch });
    }
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("training schedule is empty"));
    }
    let mut rng = seeded(cfg.seed);
    let mut adam = Adam::new(cfg.adam);
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for task in &schedule[epoch % schedule.len()] {
            let mut order: Vec<usize> = (0..task.pairs.len()).collect();
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                let pairs: Vec<Pair> = batch.iter().map(|&i| task.pairs[i]).collect();
                let labels = Matrix::from_vec(batch.len(), 1, batch.iter().map(|&i| task.labels[i]).collect())?;
                let mut tape = Tape::new();
                let vars = current.register(&mut tape);
                let h = current.encode_tape(&mut tape, &vars, &task.prop, &task.features, &task.pe)?;
                let logits = current.decode_tape(&mut tape, &vars, h, &task.pe, &pairs)?;
                let loss = tape.bce_with_logits(logits, Arc::new(labels))?;
                tape.backward(loss)?;
                let value = tape.value(loss).get(0, 0);
                let grads: Vec<Matrix> = vars
                    .iter()
                    .map(|&v| tape.grad(v).cloned().unwrap_or_else(|| Matrix::zeros(tape.value(v).rows(), tape.value(v).cols())))
                    .collect();
                adam.step(&mut current.parameters_mut(), &grads)?;
                current.enforce_constraints();
                loss_sum += value * batch.len() as f64;
                count += batch.len();
            }
        }
        let val_metric = evaluate_tasks(&current, val, cfg.metric)?;
        log::debug!("epoch {epoch}: loss {:.6} val {:.6}", loss_sum / count.max(1) as f64, val_metric);
        history.push(EpochRecord { epoch, loss: loss_sum / count.max(1) as f64, val_metric });
        if val_metric > best_metric {
            best_metric = val_metric;
            best = current.clone();
            best_epoch = Some(epoch);
        }
    }
    Ok(TrainOutcome { model: best, history, best_epoch })
}

/// Validation task: messages and encodings on the training graph.
pub fn validation_task(model: &PegModel, ds: &LinkDataset) -> Result<LinkTask> {
    LinkTask::new(model, &ds.train_graph, &ds.val_pos, &ds.val_neg)
}

/// Test task: messages and encodings on the base graph with test links
/// removed.
pub fn test_task(model: &PegModel, ds: &LinkDataset) -> Result<LinkTask> {
    let graph = ds.base_graph.without_edges(&ds.test_pos);
    LinkTask::new(model, &graph, &ds.test_pos, &ds.test_neg)
}

/// Trains on a split dataset. With `cfg.folds > 0` supervision rotates over
/// folds of the training links; otherwise every training link supervises
/// each epoch while messages pass over the whole training graph.
pub fn train(model: &PegModel, ds: &mut LinkDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let val = alloc::vec![validation_task(model, ds)?];
    if cfg.epochs == 0 {
        return train_tasks(model, &[], &val, cfg);
    }
    let schedule: Vec<Vec<LinkTask>> = if cfg.folds > 0 {
        fold_partition(model, ds, cfg.folds, cfg.seed)?.tasks.into_iter().map(|t| alloc::vec![t]).collect()
    } else {
        alloc::vec![alloc::vec![LinkTask::new(model, &ds.train_graph, &ds.train_pos, &ds.train_neg)?]]
    };
    train_tasks(model, &schedule, &val, cfg)
}

/// Area under the ROC curve as the Mann-Whitney statistic over all
/// positive/negative pairs; tied scores count one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch { expected: scores.len(), got: labels.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("scores contain NaN"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Fraction of positives scoring strictly above the `k`-th highest negative.
pub fn hits_at_k(pos_scores: &[f64], neg_scores: &[f64], k: usize) -> Result<f64> {
    if k == 0 || neg_scores.len() < k {
        return Err(Error::TooFewNegatives { k, got: neg_scores.len() });
    }
    if pos_scores.is_empty() {
        return Err(Error::SingleClass);
    }
    let mut neg = neg_scores.to_vec();
    neg.sort_by(|a, b| b.total_cmp(a));
    let threshold = neg[k - 1];
    Ok(pos_scores.iter().filter(|&&s| s > threshold).count() as f64 / pos_scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PerturbMode {
    Add,
    Drop,
}

/// Adds `round(fraction |E|)` uniform non-edges or drops as many uniform
/// existing edges. Features are kept.
pub fn perturb_graph(g: &Graph, mode: PerturbMode, fraction: f64, seed: u64) -> Result<Graph> {
    perturb_graph_excluding(g, mode, fraction, seed, &BTreeSet::new())
}

/// [`perturb_graph`] where added edges avoid the pairs in `exclude`, so that
/// held-out links cannot leak back into the message graph.
pub fn perturb_graph_excluding(g: &Graph, mode: PerturbMode, fraction: f64, seed: u64, exclude: &BTreeSet<Pair>) -> Result<Graph> {
    if !(0.0..=0.5).contains(&fraction) {
        return Err(Error::InvalidArgument("perturbation fraction must be in [0, 0.5]"));
    }
    let mut edges = g.edges();
    let count = math::round(fraction * edges.len() as f64) as usize;
    let mut rng = seeded(seed);
    match mode {
        PerturbMode::Drop => {
            edges.shuffle(&mut rng);
            edges.truncate(edges.len() - count);
        }
        PerturbMode::Add => edges.extend(sample_negatives(g, count, exclude, &mut rng)?),
    }
    g.with_edge_set(&edges)
}

/// Random Gaussian projection to `width` columns followed by row
/// normalization; all-zero rows stay zero.
pub fn project_features(x: &Matrix, width: usize, seed: u64) -> Matrix {
    let proj = normal_matrix(&mut seeded(seed), x.cols(), width, 1.0 / math::sqrt(width.max(1) as f64));
    let mut out = x.matmul(&proj);
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let norm = math::sqrt(row.iter().map(|v| v * v).sum());
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

/// Scores a frozen model on another graph's test links. Encodings are
/// computed on that graph with its test links removed. With
/// `projection_seed`, features are projected to the model's input width and
/// row-normalized first; otherwise the widths must already agree.
pub fn domain_shift_eval(model: &PegModel, test: &LinkDataset, projection_seed: Option<u64>, metric: Metric) -> Result<f64> {
    let mut graph = test.base_graph.without_edges(&test.test_pos);
    let width = model.config.in_dim;
    match projection_seed {
        Some(seed) => {
            let x = project_features(graph.features(), width, seed);
            graph.set_features(x)?;
        }
        None if graph.features().cols() != width => {
            return Err(Error::WidthMismatch { expected: width, got: graph.features().cols() });
        }
        None => {}
    }
    let task = LinkTask::new(model, &graph, &test.test_pos, &test.test_neg)?;
    evaluate_tasks(model, &[task], metric)
}

/// `(feature, φ(feature))` rows: a 50-point grid over the observed range of
/// per-edge features plus `samples` features of uniformly drawn edges,
/// sorted by feature.
pub fn edge_weight_curve(phi: &Mlp, weighting: EdgeWeighting, g: &Graph, z: &Matrix, samples: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let edges: Vec<Pair> = g.edges().into_iter().filter(|(u, v)| u != v).collect();
    if edges.is_empty() {
        return Ok(Vec::new());
    }
    let feats: Vec<f64> = edges.iter().map(|&(u, v)| weighting.feature(z, u, v)).collect();
    let lo = feats.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = feats.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    const GRID: usize = 50;
    let mut xs: Vec<f64> = (0..GRID).map(|i| lo + (hi - lo) * i as f64 / (GRID - 1) as f64).collect();
    let mut rng = seeded(seed);
    xs.extend((0..samples).map(|_| feats[rng.gen_range(0..feats.len())]));
    xs.sort_by(f64::total_cmp);
    let ys = phi.apply(&Matrix::from_vec(xs.len(), 1, xs.clone())?)?;
    Ok(xs.into_iter().zip(ys.into_vec()).collect())
}

/// Fraction of consecutive rows (with distinct features) whose weight does
/// not decrease.
pub fn monotone_fraction(curve: &[(f64, f64)]) -> f64 {
    let steps: Vec<bool> = curve.windows(2).filter(|w| w[1].0 > w[0].0).map(|w| w[1].1 >= w[0].1).collect();
    if steps.is_empty() {
        return 1.0;
    }
    steps.iter().filter(|&&b| b).count() as f64 / steps.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{apply_permutation, Permutation};
    use crate::nn::Activation;
    use crate::peg::{ModelConfig, PeConfig};
    use alloc::vec;

    fn ring(n: usize, chords: usize) -> Graph {
        let mut e: Vec<Pair> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        e.extend((0..chords).map(|i| (i, (i + n / 2) % n)));
        let g = Graph::from_edges(n, &e, false).unwrap();
        let x = crate::sbm::degree_features(&g);
        g.with_features(x).unwrap()
    }

    fn small_model(seed: u64) -> PegModel {
        let cfg = ModelConfig { hidden_dim: 8, decoder_hidden: vec![8], pe: PeConfig { dim: 3, ..Default::default() }, ..Default::default() };
        PegModel::new(cfg, &mut seeded(seed)).unwrap()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[1.0, 2.0, 3.0], &[false, true, true]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.5, 0.2], &[true, true]), Err(Error::SingleClass));
    }

    #[test]
    fn hits_examples() {
        assert_eq!(hits_at_k(&[3.0, -2.0], &[2.0, 0.0, -1.0], 2).unwrap(), 0.5);
        assert_eq!(hits_at_k(&[3.0, 1.0], &[2.0, 0.0, -1.0], 2).unwrap(), 1.0);
        assert_eq!(hits_at_k(&[5.0, 6.0], &[1.0, 2.0], 1).unwrap(), 1.0);
        assert_eq!(hits_at_k(&[-5.0, -6.0], &[1.0, 2.0], 1).unwrap(), 0.0);
        assert_eq!(hits_at_k(&[1.0], &[0.0], 2), Err(Error::TooFewNegatives { k: 2, got: 1 }));
    }

    #[test]
    fn split_examples() {
        let g = ring(30, 10);
        let ds = split_links(&g, (1.0, 0.0, 0.0), 1).unwrap();
        assert_eq!(ds.train_pos.len(), g.num_edges());
        assert!(ds.val_pos.is_empty() && ds.test_pos.is_empty());
        assert_eq!(ds.train_neg.len(), ds.train_pos.len());

        let a = split_links(&g, (0.85, 0.05, 0.1), 7).unwrap();
        let b = split_links(&g, (0.85, 0.05, 0.1), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train_graph.num_edges(), a.train_pos.len());
        for &(u, v) in a.val_pos.iter().chain(&a.test_pos) {
            assert!(!a.train_graph.has_edge(u, v));
        }

        let k4 = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], false).unwrap();
        assert!(matches!(split_links(&k4, (0.5, 0.25, 0.25), 1), Err(Error::NegativeSamplingExhausted { .. })));
        assert_eq!(split_links(&Graph::from_edges(3, &[], false).unwrap(), (1.0, 0.0, 0.0), 1), Err(Error::NotEnoughEdges { needed: 1, got: 0 }));
    }

    #[test]
    fn fold_examples() {
        let model = small_model(1);
        let g = ring(20, 6);
        let mut ds = split_links(&g, (0.8, 0.1, 0.1), 3).unwrap();
        let plan = fold_partition(&model, &mut ds, 10, 5).unwrap();
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<usize> = plan.folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..ds.train_pos.len()).collect::<Vec<_>>());

        let mut ds1 = ds.clone();
        let plan1 = fold_partition(&model, &mut ds1, 1, 5).unwrap();
        assert_eq!(plan1.tasks[0].prop.pattern.nnz(), g.num_nodes());

        // A bridge whose removal isolates a leaf.
        let tree = Graph::from_edges(5, &[(0, 1), (1, 2), (3, 4)], false).unwrap();
        let tree = tree.clone().with_features(crate::sbm::degree_features(&tree)).unwrap();
        let mut tds = split_links(&tree, (1.0, 0.0, 0.0), 2).unwrap();
        let cfg = ModelConfig { hidden_dim: 4, pe: PeConfig { dim: 1, ..Default::default() }, ..Default::default() };
        let m = PegModel::new(cfg, &mut seeded(0)).unwrap();
        assert!(fold_partition(&m, &mut tds, 2, 0).is_ok());
    }

    #[test]
    fn zero_epochs_and_determinism() {
        let model = small_model(2);
        let g = ring(24, 8);
        let mut ds = split_links(&g, (0.7, 0.15, 0.15), 4).unwrap();
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let out = train(&model, &mut ds, &cfg).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(out.model, model);

        let cfg = TrainConfig { epochs: 4, batch_size: 8, ..Default::default() };
        let a = train(&model, &mut ds.clone(), &cfg).unwrap();
        let b = train(&model, &mut ds.clone(), &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.history.len(), 4);
        let folds = TrainConfig { folds: 3, ..cfg };
        assert_eq!(train(&model, &mut ds.clone(), &folds).unwrap().history.len(), 4);
    }

    #[test]
    fn permuted_training_reproduces_history() {
        let model = small_model(3);
        let g = ring(16, 5).with_features(Matrix::from_fn(16, 1, |i, _| 1.0 + (i % 3) as f64)).unwrap();
        let ds = split_links(&g, (0.7, 0.15, 0.15), 9).unwrap();
        let perm = Permutation::new(crate::rng::random_mapping(&mut seeded(11), 16)).unwrap();
        let map = |v: &[Pair]| v.iter().map(|&e| perm.apply_pair(e)).collect::<Vec<_>>();
        let pg = apply_permutation(&g, &perm).unwrap();
        let mut pds = LinkDataset {
            base_graph: pg.clone(),
            train_graph: apply_permutation(&ds.train_graph, &perm).unwrap(),
            train_pos: map(&ds.train_pos),
            val_pos: map(&ds.val_pos),
            test_pos: map(&ds.test_pos),
            train_neg: map(&ds.train_neg),
            val_neg: map(&ds.val_neg),
            test_neg: map(&ds.test_neg),
            fold_of_train_edge: None,
        };
        let cfg = TrainConfig { epochs: 5, batch_size: 16, ..Default::default() };
        let a = train(&model, &mut ds.clone(), &cfg).unwrap();
        let b = train(&model, &mut pds, &cfg).unwrap();
        for (x, y) in a.history.iter().zip(&b.history) {
            assert!((x.loss - y.loss).abs() < 1e-9, "{x:?} {y:?}");
            assert!((x.val_metric - y.val_metric).abs() < 1e-9);
        }
    }

    #[test]
    fn perturb_examples() {
        let g = ring(10, 0);
        assert_eq!(perturb_graph(&g, PerturbMode::Drop, 0.0, 1).unwrap(), g);
        assert_eq!(perturb_graph(&g, PerturbMode::Drop, 0.5, 1).unwrap().num_edges(), 5);
        let added = perturb_graph(&g, PerturbMode::Add, 0.3, 1).unwrap();
        assert_eq!(added.num_edges(), 13);
        assert_eq!(added, perturb_graph(&g, PerturbMode::Add, 0.3, 1).unwrap());
        assert!(perturb_graph(&g, PerturbMode::Add, 0.6, 1).is_err());
    }

    #[test]
    fn domain_shift_on_same_graph_matches_test_metric() {
        let model = small_model(4);
        let g = ring(20, 6);
        let ds = split_links(&g, (0.7, 0.1, 0.2), 2).unwrap();
        let direct = evaluate_tasks(&model, &[test_task(&model, &ds).unwrap()], Metric::RocAuc).unwrap();
        assert_eq!(domain_shift_eval(&model, &ds, None, Metric::RocAuc).unwrap(), direct);
        let wide = g.clone().with_features(Matrix::from_fn(20, 3, |i, j| (i + j) as f64)).unwrap();
        let wds = split_links(&wide, (0.7, 0.1, 0.2), 2).unwrap();
        assert!(matches!(domain_shift_eval(&model, &wds, None, Metric::RocAuc), Err(Error::WidthMismatch { .. })));
        assert!(domain_shift_eval(&model, &wds, Some(1), Metric::RocAuc).is_ok());
    }

    #[test]
    fn projection_rows_are_unit() {
        let x = Matrix::from_fn(5, 4, |i, j| if i == 0 { 0.0 } else { (i * j) as f64 + 1.0 });
        let p = project_features(&x, 3, 1);
        assert_eq!(p.row(0), &[0.0, 0.0, 0.0]);
        for r in 1..5 {
            assert!((p.row(r).iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_examples() {
        let g = ring(12, 3);
        let z = normal_matrix(&mut seeded(1), 12, 2, 1.0);
        let flat = Mlp::linear(Matrix::zeros(1, 1), Some(Matrix::from_rows(&[&[0.3]])));
        let c = edge_weight_curve(&flat, EdgeWeighting::Distance, &g, &z, 20, 1).unwrap();
        assert_eq!(c.len(), 70);
        assert!(c.iter().all(|&(_, y)| y == 0.3));
        let id = Mlp::linear(Matrix::identity(1), None);
        let c = edge_weight_curve(&id, EdgeWeighting::Distance, &g, &z, 5, 1).unwrap();
        assert!(c.iter().all(|&(x, y)| (x - y).abs() < 1e-15));
        assert_eq!(monotone_fraction(&c), 1.0);
        let neg = Mlp::new(&mut seeded(2), &[1, 4, 1], Activation::Tanh, Activation::Identity, true).unwrap();
        let f = monotone_fraction(&edge_weight_curve(&neg, EdgeWeighting::Distance, &g, &z, 5, 1).unwrap());
        assert!((0.0..=1.0).contains(&f));
    }
}
