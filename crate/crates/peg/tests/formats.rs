use std::collections::BTreeMap;
use std::fs;

use peg::io::*;
use peg_core::linkpred::EpochRecord;
use peg_core::peg::{ModelConfig, PegModel};
use peg_core::rng::seeded;
use peg_core::sbm::{sbm_generate, SbmConfig};
use peg_core::{Graph, Matrix};

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn triangle_edge_list() {
    let dir = tempfile::tempdir().unwrap();
    let g = load_graph(&write(&dir, "t.txt", "0 1\n1 2\n2 0\n"), None).unwrap();
    assert_eq!(g.num_nodes(), 3);
    assert_eq!(g.edges(), vec![(0, 1), (0, 2), (1, 2)]);
    assert_eq!(g.features().shape(), (3, 1));
}

#[test]
fn duplicates_are_counted_and_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let list = read_edge_list(&write(&dir, "d.txt", "# a comment\n0\t1\n1 0\n0 1 # trailing\n1 2\n")).unwrap();
    assert_eq!(list.edges, vec![(0, 1), (1, 2)]);
    assert_eq!(list.duplicates, 2);
}

#[test]
fn node_header_keeps_isolated_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let list = read_edge_list(&write(&dir, "h.txt", "# nodes: 5\n0 1\n")).unwrap();
    assert_eq!(list.num_nodes, 5);
    assert!(matches!(read_edge_list(&write(&dir, "bad.txt", "# nodes: 2\n0 4\n")), Err(IoError::IndexOutOfRange { .. })));
}

#[test]
fn malformed_lines_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for text in ["0 1 2\n", "0 x\n", "3 3\n", "-1 2\n"] {
        assert!(matches!(read_edge_list(&write(&dir, "m.txt", text)), Err(IoError::Parse { line: 1, .. })), "{text:?}");
    }
}

#[test]
fn feature_row_count_must_match() {
    let dir = tempfile::tempdir().unwrap();
    let edges = write(&dir, "e.txt", "0 1\n1 2\n");
    let feats = write(&dir, "f.csv", "1.0,2.0\n3.0,4.0\n");
    assert!(matches!(load_graph(&edges, Some(&feats)), Err(IoError::FeatureRowMismatch { expected: 3, got: 2 })));
}

#[test]
fn graph_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let g = Graph::from_edges(6, &[(0, 1), (2, 3), (3, 4)], false)
        .unwrap()
        .with_features(Matrix::from_fn(6, 2, |i, j| 0.1 * i as f64 - 1.0 / (j as f64 + 3.0)))
        .unwrap();
    let (e, f) = (dir.path().join("g.txt"), dir.path().join("g.csv"));
    save_graph(&g, &e, Some(&f)).unwrap();
    let back = load_graph(&e, Some(&f)).unwrap();
    assert_eq!(back.num_nodes(), 6);
    assert_eq!(back.edges(), g.edges());
    assert_eq!(back.features(), g.features());
}

#[test]
fn single_run_has_zero_std() {
    let s = MetricSummary::from_runs(&[0.8125]);
    assert_eq!((s.mean, s.std), (0.8125, 0.0));
}

#[test]
fn summary_matches_two_pass_formula() {
    let runs: Vec<f64> = (0..10).map(|i| 0.7 + 0.013 * i as f64 + if i % 3 == 0 { 0.005 } else { 0.0 }).collect();
    let mean = runs.iter().sum::<f64>() / 10.0;
    let std = (runs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 10.0).sqrt();
    let s = MetricSummary::from_runs(&runs);
    assert!((s.mean - mean).abs() < 1e-15 && (s.std - std).abs() < 1e-15);
}

#[test]
fn results_files() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = BTreeMap::from([("test_auc".to_string(), vec![0.5, 0.7])]);
    let history = vec![EpochRecord { epoch: 0, loss: 0.69, val_metric: 0.5 }];
    write_results(dir.path(), &metrics, &history).unwrap();
    let parsed: ResultsFile = read_json(&dir.path().join("metrics.json")).unwrap();
    assert_eq!(parsed.schema_version, RESULTS_SCHEMA_VERSION);
    assert!((parsed.metrics["test_auc"].mean - 0.6).abs() < 1e-12);
    assert_eq!(fs::read_to_string(dir.path().join("history.csv")).unwrap(), "epoch,loss,val_metric\n0,0.69,0.5\n");
    let empty = dir.path().join("empty.csv");
    write_history_csv(&empty, &[]).unwrap();
    assert_eq!(fs::read_to_string(empty).unwrap(), "epoch,loss,val_metric\n");
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let tensors = vec![
        ("a".to_string(), Matrix::from_fn(3, 2, |i, j| (i as f64 + 1.0) / (j as f64 + 7.0))),
        ("b.weight".to_string(), Matrix::zeros(0, 4)),
    ];
    let path = dir.path().join("w.pegw");
    write_checkpoint(&path, &tensors).unwrap();
    assert_eq!(read_checkpoint(&path).unwrap(), tensors);
    let mut bytes = fs::read(&path).unwrap();
    bytes[0] = b'X';
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_checkpoint(&path), Err(IoError::Checkpoint(_))));
    bytes[0] = b'P';
    fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(read_checkpoint(&path), Err(IoError::Checkpoint(_))));
}

#[test]
fn model_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ModelConfig { in_dim: 3, hidden_dim: 5, phi_hidden: 4, ..ModelConfig::default() };
    let model = PegModel::new(cfg.clone(), &mut seeded(9)).unwrap();
    save_model(dir.path(), &model).unwrap();
    let back = load_model(dir.path()).unwrap();
    assert_eq!(back.config, cfg);
    assert_eq!(model_tensors(&back), model_tensors(&model));
}

#[test]
fn model_config_fills_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = read_model_config(&write(&dir, "c.json", r#"{"in_dim": 4, "pe": {"dim": 3}}"#)).unwrap();
    assert_eq!(cfg.in_dim, 4);
    assert_eq!(cfg.pe.dim, 3);
    assert_eq!(cfg.hidden_dim, ModelConfig::default().hidden_dim);
}

#[test]
fn sbm_intra_degree_matches_binomial_mean() {
    let cfg = SbmConfig::two_blocks(0);
    let block = cfg.block_of();
    let (n, q) = (499.0, 0.3);
    // Mean intra degree is 2E/1000 with E ~ Binomial(2 * C(500, 2), q).
    let pairs: f64 = 2.0 * 500.0 * 499.0 / 2.0;
    let sigma_of_mean = 2.0 * (pairs * q * (1.0 - q)).sqrt() / 1000.0;
    for seed in 0..10 {
        let g = sbm_generate(&SbmConfig { seed, ..cfg.clone() }).unwrap();
        let intra = g.edges().iter().filter(|&&(u, v)| block[u] == block[v]).count();
        let mean_intra_degree = 2.0 * intra as f64 / 1000.0;
        assert!((mean_intra_degree - n * q).abs() < 3.0 * sigma_of_mean, "seed {seed}: {mean_intra_degree}");
    }
}

#[test]
fn sbm_edge_cases() {
    let empty = sbm_generate(&SbmConfig { blocks: vec![4, 3], p_within: 0.0, p_between: 0.0, seed: 1, ..SbmConfig::two_blocks(0) }).unwrap();
    assert_eq!(empty.num_edges(), 0);
    let k4 = sbm_generate(&SbmConfig { blocks: vec![4], p_within: 1.0, p_between: 0.0, seed: 1, ..SbmConfig::two_blocks(0) }).unwrap();
    assert_eq!(k4.num_edges(), 6);
    let a = sbm_generate(&SbmConfig::two_blocks(3)).unwrap();
    let b = sbm_generate(&SbmConfig::two_blocks(3)).unwrap();
    assert_eq!(a.edges(), b.edges());
}
