//! File formats: edge lists, feature CSVs, result summaries, training
//! histories, model configs and binary parameter checkpoints.
//!
//! Edge list: one `u v` pair per line (tab or spaces), 0-based indices, `#`
//! starts a comment. A `# nodes: N` comment fixes the node count, otherwise
//! it is one past the largest index. Feature CSV: no header, row `i` holds
//! node `i`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use peg_core::linkpred::EpochRecord;
use peg_core::peg::{ModelConfig, PegModel};
use peg_core::{Graph, Matrix};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("node index {index} out of range for {nodes} nodes")]
    IndexOutOfRange { index: usize, nodes: usize },
    #[error("feature file has {got} rows but the graph has {expected} nodes")]
    FeatureRowMismatch { expected: usize, got: usize },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Core(#[from] peg_core::Error),
}

pub type IoResult<T> = std::result::Result<T, IoError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> IoResult<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

/// Parsed edge list before graph construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeList {
    pub num_nodes: usize,
    /// Canonical `u <= v` pairs without repeats.
    pub edges: Vec<(usize, usize)>,
    /// Lines that repeated an edge already seen in either direction.
    pub duplicates: usize,
}

pub fn read_edge_list(path: &Path) -> IoResult<EdgeList> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut declared = None;
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    let mut duplicates = 0;
    let mut max_index = None::<usize>;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let parse_err = |message: String| IoError::Parse { path: path.to_path_buf(), line: i + 1, message };
        let trimmed = line.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(n) = comment.trim().strip_prefix("nodes:") {
                declared = Some(n.trim().parse::<usize>().map_err(|e| parse_err(format!("bad node count: {e}")))?);
            }
            continue;
        }
        let body = trimmed.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(format!("expected two node indices, found {} fields", fields.len())));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|e| parse_err(format!("bad node index {s:?}: {e}")));
        let (u, v) = (parse(fields[0])?, parse(fields[1])?);
        if u == v {
            return Err(parse_err(format!("self-loop on node {u}")));
        }
        max_index = Some(max_index.unwrap_or(0).max(u).max(v));
        let key = (u.min(v), u.max(v));
        if seen.insert(key) {
            edges.push(key);
        } else {
            duplicates += 1;
        }
    }
    let inferred = max_index.map_or(0, |m| m + 1);
    let num_nodes = match declared {
        Some(n) if n < inferred => return Err(IoError::IndexOutOfRange { index: inferred - 1, nodes: n }),
        Some(n) => n,
        None => inferred,
    };
    if duplicates > 0 {
        log::warn!("{}: dropped {duplicates} duplicate edge line(s)", path.display());
    }
    Ok(EdgeList { num_nodes, edges, duplicates })
}

pub fn read_matrix_csv(path: &Path) -> IoResult<Matrix> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IoError::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(IoError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(Matrix::from_vec(rows.len(), cols, rows.concat())?)
}

/// Header-less CSV with full round-trip precision.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> IoResult<()> {
    let mut w = create(path)?;
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(",")).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Builds a graph from an edge list and an optional feature CSV. Without a
/// feature file each node gets its degree as a single feature.
pub fn load_graph(edge_path: &Path, feature_path: Option<&Path>) -> IoResult<Graph> {
    let list = read_edge_list(edge_path)?;
    let g = Graph::from_edges(list.num_nodes, &list.edges, false)?;
    let x = match feature_path {
        Some(p) => {
            let x = read_matrix_csv(p)?;
            if x.rows() != g.num_nodes() {
                return Err(IoError::FeatureRowMismatch { expected: g.num_nodes(), got: x.rows() });
            }
            x
        }
        None => peg_core::sbm::degree_features(&g),
    };
    Ok(g.with_features(x)?)
}

/// Writes the edge list (with a `# nodes:` header) and, if asked, the
/// features.
pub fn save_graph(g: &Graph, edge_path: &Path, feature_path: Option<&Path>) -> IoResult<()> {
    let mut w = create(edge_path)?;
    writeln!(w, "# nodes: {}", g.num_nodes()).map_err(io_err(edge_path))?;
    for (u, v) in g.edges() {
        writeln!(w, "{u}\t{v}").map_err(io_err(edge_path))?;
    }
    w.flush().map_err(io_err(edge_path))?;
    if let Some(p) = feature_path {
        write_matrix_csv(p, g.features())?;
    }
    Ok(())
}

/// Summary of one metric over repeated runs; `std` is the population
/// standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub runs: Vec<f64>,
}

impl MetricSummary {
    pub fn from_runs(runs: &[f64]) -> Self {
        if runs.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN, runs: Vec::new() };
        }
        let n = runs.len() as f64;
        let mean = runs.iter().sum::<f64>() / n;
        let var = runs.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt(), runs: runs.to_vec() }
    }
}

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema_version: u32,
    pub metrics: BTreeMap<String, MetricSummary>,
}

pub fn write_metrics_json(path: &Path, metrics: &BTreeMap<String, Vec<f64>>) -> IoResult<()> {
    let file = ResultsFile {
        schema_version: RESULTS_SCHEMA_VERSION,
        metrics: metrics.iter().map(|(k, v)| (k.clone(), MetricSummary::from_runs(v))).collect(),
    };
    write_json(path, &file)
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> IoResult<()> {
    let mut w = create(path)?;
    writeln!(w, "epoch,loss,val_metric").map_err(io_err(path))?;
    for r in history {
        writeln!(w, "{},{:?},{:?}", r.epoch, r.loss, r.val_metric).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Metrics JSON plus history CSV in `dir`.
pub fn write_results(dir: &Path, metrics: &BTreeMap<String, Vec<f64>>, history: &[EpochRecord]) -> IoResult<()> {
    write_metrics_json(&dir.join("metrics.json"), metrics)?;
    write_history_csv(&dir.join("history.csv"), history)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> IoResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
    writeln!(w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> IoResult<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}

pub fn read_model_config(path: &Path) -> IoResult<ModelConfig> {
    read_json(path)
}

const MAGIC: &[u8; 4] = b"PEGW";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named parameter tensors in checkpoint order.
pub type NamedTensors = Vec<(String, Matrix)>;

pub fn write_checkpoint(path: &Path, tensors: &[(String, Matrix)]) -> IoResult<()> {
    let mut w = create(path)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for (name, m) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&2u32.to_le_bytes());
        buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> IoResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| IoError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> IoResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> IoResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(path: &Path) -> IoResult<NamedTensors> {
    let mut bytes = Vec::new();
    fs::File::open(path).map_err(io_err(path))?.read_to_end(&mut bytes).map_err(io_err(path))?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(IoError::Checkpoint("missing PEGW magic".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(IoError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut out = Vec::new();
    while c.pos < bytes.len() {
        let len = c.u32()? as usize;
        let name = String::from_utf8(c.take(len)?.to_vec()).map_err(|e| IoError::Checkpoint(e.to_string()))?;
        let rank = c.u32()? as usize;
        let dims: Vec<usize> = (0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<IoResult<_>>()?;
        let (rows, cols) = match dims.as_slice() {
            [] => (1, 1),
            [n] => (*n, 1),
            [r, k] => (*r, *k),
            _ => return Err(IoError::Checkpoint(format!("{name}: rank {rank} is not supported"))),
        };
        let count = rows.checked_mul(cols).ok_or_else(|| IoError::Checkpoint(format!("{name}: shape overflow")))?;
        let raw = c.take(count.checked_mul(8).ok_or_else(|| IoError::Checkpoint(format!("{name}: shape overflow")))?)?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        out.push((name, Matrix::from_vec(rows, cols, data)?));
    }
    Ok(out)
}

pub fn model_tensors(model: &PegModel) -> NamedTensors {
    model.parameter_names().into_iter().zip(model.parameters().into_iter().cloned()).collect()
}

/// Copies checkpoint tensors into a model built from the matching config.
pub fn load_model_parameters(model: &mut PegModel, tensors: &[(String, Matrix)]) -> IoResult<()> {
    let names = model.parameter_names();
    let by_name: BTreeMap<&str, &Matrix> = tensors.iter().map(|(n, m)| (n.as_str(), m)).collect();
    if by_name.len() != names.len() {
        return Err(IoError::Checkpoint(format!("expected {} tensors, found {}", names.len(), by_name.len())));
    }
    for (name, slot) in names.iter().zip(model.parameters_mut()) {
        let m = by_name.get(name.as_str()).ok_or_else(|| IoError::Checkpoint(format!("missing tensor {name}")))?;
        if m.shape() != slot.shape() {
            return Err(IoError::Checkpoint(format!("{name}: shape {:?}, model expects {:?}", m.shape(), slot.shape())));
        }
        *slot = (*m).clone();
    }
    Ok(())
}

/// `model.json` plus `model.pegw` in `dir`.
pub fn save_model(dir: &Path, model: &PegModel) -> IoResult<()> {
    write_json(&dir.join("model.json"), &model.config)?;
    write_checkpoint(&dir.join("model.pegw"), &model_tensors(model))
}

pub fn load_model(dir: &Path) -> IoResult<PegModel> {
    let cfg = read_model_config(&dir.join("model.json"))?;
    // Initialization is overwritten; the seed only fixes shapes.
    let mut model = PegModel::new(cfg, &mut peg_core::rng::seeded(0))?;
    load_model_parameters(&mut model, &read_checkpoint(&dir.join("model.pegw"))?)?;
    Ok(model)
}
