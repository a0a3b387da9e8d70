use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use peg::experiments::{diagnose, perturbation_sweep, run_sbm_benchmark, write_diagnostics_csv, SbmBenchmark};
use peg::io::{
    load_graph, load_model, read_model_config, save_graph, save_model, write_json, write_matrix_csv, write_results,
};
use peg_core::factorization::{deepwalk_targets, default_c, line_targets, solve_factorization, FactorizationConfig};
use peg_core::linkpred::{
    domain_shift_eval, evaluate_tasks, perturb_graph_excluding, project_features, split_links, test_task, train, LinkDataset,
    LinkTask, Metric, PerturbMode, TrainConfig,
};
use peg_core::nn::AdamConfig;
use peg_core::peg::{ModelConfig, PeKind, PegModel};
use peg_core::rng::seeded;
use peg_core::sbm::{sbm_generate, FeatureMode, SbmConfig};
use peg_core::spectral::{laplacian_eigenmap, SolverConfig};
use peg_core::{Graph, SelfLoops};

#[derive(Parser)]
#[command(name = "peg", version, about = "Positional-encoding graph networks for link prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigengap table (p, lambda_p, gap_p, rho_p) of the normalized Laplacian.
    Diagnose {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 20)]
        p_max: usize,
        #[arg(long, value_enum, default_value_t = LoopPolicy::PadIsolated)]
        self_loops: LoopPolicy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute a positional encoding and write it as CSV.
    Pe {
        #[command(subcommand)]
        method: PeCommand,
    },
    /// Split links, train, and write checkpoint, history and metrics.
    Train(TrainArgs),
    /// Score a saved model on the test links of a graph split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long, default_value = "auc", value_parser = parse_metric)]
        metric: Metric,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Test metric of a saved model after adding or dropping message edges.
    PerturbEval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Drop)]
        mode: Mode,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3")]
        fractions: Vec<f64>,
        #[arg(long, default_value = "auc", value_parser = parse_metric)]
        metric: Metric,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on one graph and test on another.
    DomainShift {
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        test_graph: PathBuf,
        #[arg(long)]
        test_features: Option<PathBuf>,
        /// Project both feature matrices to this width and row-normalize.
        #[arg(long)]
        project_dim: Option<usize>,
    },
    /// Generate a stochastic block model graph.
    Sbm {
        #[arg(long, value_delimiter = ',', default_value = "500,500")]
        blocks: Vec<usize>,
        #[arg(long, default_value_t = 0.3)]
        p_in: f64,
        #[arg(long, default_value_t = 0.1)]
        p_out: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        features_out: Option<PathBuf>,
    },
    /// Train on generated block-model graphs and report test ROC-AUC.
    SbmBench {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        /// Defaults to the benchmark setting (30).
        #[arg(long)]
        epochs: Option<usize>,
        /// Defaults to the benchmark setting (2, one per block).
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum PeCommand {
    /// Eigenvectors of the smallest normalized-Laplacian eigenvalues.
    Eigenmap {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        dim: usize,
        #[arg(long, value_enum, default_value_t = LoopPolicy::PadIsolated)]
        self_loops: LoopPolicy,
        #[arg(long)]
        out: PathBuf,
    },
    /// LINE or DeepWalk matrix factorization.
    Factorize {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum)]
        method: FactorMethod,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        max_iters: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Seed of the link split (and of training).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model config JSON; flags below override its encoding settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PeArg::Le)]
    pe: PeArg,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    folds: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value = "auc", value_parser = parse_metric)]
    metric: Metric,
    /// Repeat with seeds seed, seed+1, ...; the first run's model is saved.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LoopPolicy {
    PadIsolated,
    All,
    Strict,
}

impl From<LoopPolicy> for SelfLoops {
    fn from(p: LoopPolicy) -> Self {
        match p {
            LoopPolicy::PadIsolated => SelfLoops::PadIsolated,
            LoopPolicy::All => SelfLoops::All,
            LoopPolicy::Strict => SelfLoops::Strict,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PeArg {
    Le,
    Deepwalk,
    Line,
}

#[derive(Clone, Copy, ValueEnum)]
enum FactorMethod {
    Line,
    Deepwalk,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Add,
    Drop,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    match s {
        "auc" => Ok(Metric::RocAuc),
        _ => s
            .strip_prefix("hits@")
            .and_then(|k| k.parse().ok())
            .map(Metric::HitsAtK)
            .ok_or_else(|| format!("expected `auc` or `hits@K`, got {s:?}")),
    }
}

fn metric_name(m: Metric) -> String {
    match m {
        Metric::RocAuc => "roc_auc".into(),
        Metric::HitsAtK(k) => format!("hits@{k}"),
    }
}

const SPLIT: (f64, f64, f64) = (0.85, 0.05, 0.10);

fn model_config(args: &TrainArgs, in_dim: usize) -> anyhow::Result<ModelConfig> {
    let mut cfg = match &args.config {
        Some(p) => read_model_config(p)?,
        None => ModelConfig::default(),
    };
    cfg.in_dim = in_dim;
    cfg.pe.kind = match args.pe {
        PeArg::Le => PeKind::LaplacianEigenmap,
        PeArg::Deepwalk => PeKind::DeepWalk,
        PeArg::Line => PeKind::Line,
    };
    cfg.pe.dim = args.dim;
    Ok(cfg)
}

fn train_config(args: &TrainArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        adam: AdamConfig { lr: args.lr, ..AdamConfig::default() },
        seed,
        folds: args.folds,
        metric: args.metric,
    }
}

/// Trains `runs` models on `graph`; returns the first model, its history and
/// every run's test metric on `ds`-style splits.
fn train_runs(args: &TrainArgs, graph: &Graph) -> anyhow::Result<(PegModel, Vec<peg_core::linkpred::EpochRecord>, Vec<f64>)> {
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let cfg = model_config(args, graph.features().cols())?;
    let mut first = None;
    let mut scores = Vec::new();
    for r in 0..args.runs {
        let seed = args.data.seed + r as u64;
        let mut ds = split_links(graph, SPLIT, seed)?;
        let model = PegModel::new(cfg.clone(), &mut seeded(seed))?;
        let outcome = train(&model, &mut ds, &train_config(args, seed))?;
        let score = evaluate_tasks(&outcome.model, &[test_task(&outcome.model, &ds)?], args.metric)?;
        log::info!("run {r} (seed {seed}): test {} = {score:.4}", metric_name(args.metric));
        scores.push(score);
        if first.is_none() {
            first = Some((outcome.model, outcome.history));
        }
    }
    let (model, history) = first.expect("at least one run");
    Ok((model, history, scores))
}

fn load_data(d: &DataArgs) -> anyhow::Result<Graph> {
    load_graph(&d.graph, d.features.as_deref()).with_context(|| format!("loading {}", d.graph.display()))
}

fn write_single_metric(dir: &Path, name: String, values: Vec<f64>) -> anyhow::Result<()> {
    write_results(dir, &BTreeMap::from([(name, values)]), &[])?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Diagnose { graph, p_max, self_loops, out } => {
            let g = load_graph(&graph, None)?;
            let rows = diagnose(&g, p_max, self_loops.into(), &SolverConfig::default())?;
            write_diagnostics_csv(&out, &rows)?;
        }
        Command::Pe { method: PeCommand::Eigenmap { graph, dim, self_loops, out } } => {
            let g = load_graph(&graph, None)?;
            let pe = laplacian_eigenmap(&g, dim, self_loops.into(), &SolverConfig::default())?;
            write_matrix_csv(&out, &pe.z)?;
        }
        Command::Pe { method: PeCommand::Factorize { graph, method, dim, window, seed, max_iters, out } } => {
            let g = load_graph(&graph, None)?;
            let c = default_c(&g);
            let obj = match method {
                FactorMethod::Line => line_targets(&g, c)?,
                FactorMethod::Deepwalk => deepwalk_targets(&g, window, c)?,
            };
            let cfg = FactorizationConfig { max_iters, ..FactorizationConfig::default() };
            let res = solve_factorization(&obj, dim, seed, &cfg)?;
            if !res.converged {
                log::warn!("factorization stopped after {} iterations, gradient norm {:.3e}", res.iterations, res.grad_norm);
            }
            write_matrix_csv(&out, &res.z)?;
        }
        Command::Train(args) => {
            let g = load_data(&args.data)?;
            let (model, history, scores) = train_runs(&args, &g)?;
            save_model(&args.out_dir, &model)?;
            write_results(&args.out_dir, &BTreeMap::from([(metric_name(args.metric), scores)]), &history)?;
        }
        Command::Eval { data, model_dir, metric, out_dir } => {
            let g = load_data(&data)?;
            let model = load_model(&model_dir)?;
            let ds = split_links(&g, SPLIT, data.seed)?;
            let score = evaluate_tasks(&model, &[test_task(&model, &ds)?], metric)?;
            println!("{} {score:.6}", metric_name(metric));
            if let Some(dir) = out_dir {
                write_single_metric(&dir, metric_name(metric), vec![score])?;
            }
        }
        Command::PerturbEval { data, model_dir, mode, fractions, metric, out } => {
            let g = load_data(&data)?;
            let model = load_model(&model_dir)?;
            let ds = split_links(&g, SPLIT, data.seed)?;
            let message = ds.base_graph.without_edges(&ds.test_pos);
            let held: std::collections::BTreeSet<_> = ds.test_pos.iter().chain(&ds.test_neg).copied().collect();
            let mode = match mode {
                Mode::Add => PerturbMode::Add,
                Mode::Drop => PerturbMode::Drop,
            };
            let mut rows = BTreeMap::new();
            for f in fractions {
                let perturbed = perturb_graph_excluding(&message, mode, f, data.seed, &held)?;
                let task = LinkTask::new(&model, &perturbed, &ds.test_pos, &ds.test_neg)?;
                let score = evaluate_tasks(&model, &[task], metric)?;
                println!("{f}\t{score:.6}");
                rows.insert(format!("{}@{f}", metric_name(metric)), vec![score]);
            }
            if let Some(dir) = out {
                write_results(&dir, &rows, &[])?;
            }
        }
        Command::DomainShift { train: args, test_graph, test_features, project_dim } => {
            let mut g_train = load_data(&args.data)?;
            let mut g_test = load_graph(&test_graph, test_features.as_deref())?;
            let width = match project_dim {
                Some(w) => Some(w),
                None if g_train.features().cols() != g_test.features().cols() => Some(g_train.features().cols()),
                None => None,
            };
            if let Some(w) = width {
                let x = project_features(g_train.features(), w, args.data.seed);
                g_train.set_features(x)?;
                let x = project_features(g_test.features(), w, args.data.seed.wrapping_add(1));
                g_test.set_features(x)?;
            }
            let (model, history, in_domain) = train_runs(&args, &g_train)?;
            let test_ds: LinkDataset = split_links(&g_test, SPLIT, args.data.seed)?;
            let shifted = domain_shift_eval(&model, &test_ds, None, args.metric)?;
            println!("in-domain {:.6} shifted {shifted:.6}", in_domain[0]);
            save_model(&args.out_dir, &model)?;
            let name = metric_name(args.metric);
            let metrics = BTreeMap::from([(format!("{name}_in_domain"), in_domain), (format!("{name}_shifted"), vec![shifted])]);
            write_results(&args.out_dir, &metrics, &history)?;
        }
        Command::Sbm { blocks, p_in, p_out, seed, out, features_out } => {
            let cfg = SbmConfig { blocks, p_within: p_in, p_between: p_out, seed, feature_mode: FeatureMode::Degree };
            let g = sbm_generate(&cfg)?;
            save_graph(&g, &out, features_out.as_deref())?;
            log::info!("{} nodes, {} edges", g.num_nodes(), g.num_edges());
        }
        Command::SbmBench { seeds, epochs, dim, out_dir } => {
            let mut bench = SbmBenchmark::default();
            if let Some(epochs) = epochs {
                bench.train.epochs = epochs;
            }
            if let Some(dim) = dim {
                bench.model.pe.dim = dim;
            }
            let mut aucs = Vec::new();
            let mut drops: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for &seed in &seeds {
                let run = run_sbm_benchmark(&bench, seed)?;
                println!("seed {seed}: mean test ROC-AUC {:.4}", run.mean_auc());
                for (f, auc) in perturbation_sweep(&run.outcome.model, &run.test_graphs, PerturbMode::Drop, &[0.1, 0.2, 0.3], seed)? {
                    drops.entry(format!("roc_auc_drop_{f}")).or_default().push(auc);
                }
                aucs.push(run.mean_auc());
                if seed == seeds[0] {
                    save_model(&out_dir, &run.outcome.model)?;
                    write_json(&out_dir.join("test_auc_per_graph.json"), &run.test_auc)?;
                    peg::io::write_history_csv(&out_dir.join("history.csv"), &run.outcome.history)?;
                }
            }
            drops.insert("roc_auc".into(), aucs);
            peg::io::write_metrics_json(&out_dir.join("metrics.json"), &drops)?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
