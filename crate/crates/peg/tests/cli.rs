use std::path::Path;
use std::process::Command;

fn peg(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_peg")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_diagnose_encode_train_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.txt");
    let run = dir.path().join("run");
    peg(&["sbm", "--blocks", "20,20", "--p-in", "0.4", "--p-out", "0.05", "--seed", "3", "--out", s(&graph)]);

    let diag = dir.path().join("d.csv");
    peg(&["diagnose", "--graph", s(&graph), "--p-max", "3", "--out", s(&diag)]);
    let text = std::fs::read_to_string(&diag).unwrap();
    assert!(text.starts_with("p,lambda_p,gap_p,rho_p\n") && text.lines().count() == 4);

    let z = dir.path().join("z.csv");
    peg(&["pe", "eigenmap", "--graph", s(&graph), "--dim", "2", "--out", s(&z)]);
    assert_eq!(peg::io::read_matrix_csv(&z).unwrap().shape(), (40, 2));
    peg(&["pe", "factorize", "--graph", s(&graph), "--method", "line", "--dim", "2", "--max-iters", "50", "--out", s(&z)]);
    assert_eq!(peg::io::read_matrix_csv(&z).unwrap().shape(), (40, 2));

    peg(&["train", "--graph", s(&graph), "--dim", "2", "--epochs", "3", "--folds", "10", "--out-dir", s(&run)]);
    for f in ["model.json", "model.pegw", "metrics.json", "history.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(run.join("history.csv")).unwrap().lines().count(), 4);

    let printed = peg(&["eval", "--graph", s(&graph), "--model-dir", s(&run)]);
    let metrics: peg::io::ResultsFile = peg::io::read_json(&run.join("metrics.json")).unwrap();
    let auc: f64 = printed.split_whitespace().last().unwrap().parse().unwrap();
    assert!((auc - metrics.metrics["roc_auc"].mean).abs() < 1e-6, "{printed}");

    peg(&["perturb-eval", "--graph", s(&graph), "--model-dir", s(&run), "--mode", "add", "--fractions", "0.1"]);
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("bad.txt");
    std::fs::write(&graph, "0 1\n1 one\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_peg")).args(["diagnose", "--graph", s(&graph), "--p-max", "1", "--out", s(&dir.path().join("d.csv"))]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));
}
