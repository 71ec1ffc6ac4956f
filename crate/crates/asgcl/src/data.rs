//! Dataset ingestion, synthetic generation and the on-disk formats.
//!
//! A dataset is either a file triple (edge list, features, labels) or a
//! stochastic block model drawn on demand. File formats:
//!
//! * edge list: UTF-8 text, one `i j` pair per line, 0-based indices,
//!   whitespace-separated, undirected (mirrored and deduplicated on load);
//! * features: CSV of reals (one row per node), or binary: an 8-byte header
//!   of two little-endian u32 (n, d) followed by `n * d` little-endian f32
//!   in row-major order; a file is read as binary exactly when its length
//!   equals `8 + 4 n d` for the header it starts with;
//! * labels: text, one integer per line; non-contiguous label sets are
//!   remapped to `0..classes` with a logged warning.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::TrajectoryPoint;
use crate::error::{Error, Result};
use crate::graph::{build_graph, Graph};
use crate::losses::LossBreakdown;

/// Stochastic block model parameters. Nodes are assigned to blocks round
/// robin (`node % blocks`); features are a one-hot block indicator plus
/// zero-mean uniform noise of half-width `feature_noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmParams {
    pub n: usize,
    pub blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    #[serde(default)]
    pub feature_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Paths of an on-disk dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileTriple {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
}

/// A named dataset: exactly one of `files` or `sbm` must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    #[serde(default)]
    pub files: Option<FileTriple>,
    #[serde(default)]
    pub sbm: Option<SbmParams>,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        match (&self.files, &self.sbm) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            (Some(_), Some(_)) => {
                Err(Error::Config(format!("dataset {}: both files and sbm given", self.name)))
            }
            (None, None) => {
                Err(Error::Config(format!("dataset {}: neither files nor sbm given", self.name)))
            }
        }
    }
}

/// Materializes a dataset from files or by SBM draw.
pub fn load_dataset(spec: &DatasetSpec) -> Result<Graph> {
    spec.validate()?;
    if let Some(params) = &spec.sbm {
        return generate_sbm(params);
    }
    let files = spec.files.as_ref().expect("validated");
    let features = load_features(&files.features)?;
    let n = features.nrows();
    let labels = load_labels(&files.labels, n)?;
    let pairs = load_edges(&files.edges, n)?;
    build_graph(n, &pairs, features, Some(labels))
}

/// Independent Bernoulli edges with within/between-block probabilities,
/// drawn pair by pair in row-major order so a seed fixes the graph.
pub fn generate_sbm(params: &SbmParams) -> Result<Graph> {
    let SbmParams { n, blocks, p_in, p_out, feature_noise, seed } = *params;
    if n == 0 || blocks == 0 || blocks > n {
        return Err(Error::Config(format!("sbm needs 1 <= blocks <= n, got n={n} blocks={blocks}")));
    }
    for (name, p) in [("p_in", p_in), ("p_out", p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("sbm {name} must be in [0, 1], got {p}")));
        }
    }
    if p_out > p_in {
        return Err(Error::Config(format!(
            "sbm needs p_out <= p_in, got p_in={p_in} p_out={p_out}"
        )));
    }
    if !(feature_noise >= 0.0) || !feature_noise.is_finite() {
        return Err(Error::Config(format!(
            "sbm feature_noise must be nonnegative, got {feature_noise}"
        )));
    }
    let block = |v: usize| v % blocks;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if block(i) == block(j) { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    let mut features = DMatrix::zeros(n, blocks);
    for v in 0..n {
        for c in 0..blocks {
            let noise =
                if feature_noise > 0.0 { rng.gen_range(-feature_noise..feature_noise) } else { 0.0 };
            features[(v, c)] = noise + if c == block(v) { 1.0 } else { 0.0 };
        }
    }
    let labels: Vec<usize> = (0..n).map(block).collect();
    build_graph(n, &pairs, features, Some(labels))
}

fn parse_index(token: &str, n: usize, path: &Path, line_no: usize) -> Result<usize> {
    let v: usize = token.parse().map_err(|_| {
        Error::Data(format!("{}:{line_no}: bad node index {token:?}", path.display()))
    })?;
    if v >= n {
        return Err(Error::Data(format!(
            "{}:{line_no}: node index {v} out of range (n = {n})",
            path.display()
        )));
    }
    Ok(v)
}

fn load_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let mut tokens = line.split_whitespace();
        let Some(first) = tokens.next() else { continue };
        let second = tokens.next().ok_or_else(|| {
            Error::Data(format!("{}:{line_no}: expected two indices", path.display()))
        })?;
        if let Some(extra) = tokens.next() {
            return Err(Error::Data(format!(
                "{}:{line_no}: trailing token {extra:?}",
                path.display()
            )));
        }
        let i = parse_index(first, n, path, line_no)?;
        let j = parse_index(second, n, path, line_no)?;
        if i == j {
            return Err(Error::Data(format!("{}:{line_no}: self-loop {i}", path.display())));
        }
        pairs.push((i, j));
    }
    Ok(pairs)
}

/// Reads a feature matrix, deciding between the binary and CSV layouts by
/// the documented size rule.
fn load_features(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() >= 8 {
        let n = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
        let d = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        if n > 0 && d > 0 && bytes.len() == 8 + 4 * n * d {
            return read_binary_features(&bytes[8..], n, d);
        }
    }
    read_csv_features(&bytes, path)
}

fn read_binary_features(data: &[u8], n: usize, d: usize) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(n, d);
    for r in 0..n {
        for c in 0..d {
            let off = 4 * (r * d + c);
            let v = f32::from_le_bytes(data[off..off + 4].try_into().expect("4 bytes"));
            m[(r, c)] = v as f64;
        }
    }
    Ok(m)
}

fn read_csv_features(bytes: &[u8], path: &Path) -> Result<DMatrix<f64>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::Data(format!("{}: not UTF-8 and not binary", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| {
                    Error::Data(format!("{}:{line_no}: bad real {tok:?}", path.display()))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Data(format!(
                    "{}:{line_no}: {} columns, expected {}",
                    path.display(),
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no feature rows", path.display())));
    }
    let (n, d) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, d, |r, c| rows[r][c]))
}

fn load_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut raw = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let tok = line.trim();
        if tok.is_empty() {
            continue;
        }
        let v: i64 = tok.parse().map_err(|_| {
            Error::Data(format!("{}:{line_no}: bad label {tok:?}", path.display()))
        })?;
        raw.push(v);
    }
    if raw.len() != n {
        return Err(Error::Data(format!(
            "{}: {} labels for {n} nodes",
            path.display(),
            raw.len()
        )));
    }
    let mut distinct: Vec<i64> = raw.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let contiguous =
        distinct.first() == Some(&0) && *distinct.last().expect("non-empty") == distinct.len() as i64 - 1;
    if !contiguous {
        log::warn!(
            "{}: labels {:?}.. are not 0..{}; remapping by sorted order",
            path.display(),
            &distinct[..distinct.len().min(5)],
            distinct.len()
        );
    }
    Ok(raw
        .iter()
        .map(|v| distinct.binary_search(v).expect("value came from this list"))
        .collect())
}

/// Writes the `i j` pairs (upper triangle only) of a graph.
pub fn write_edge_list(path: &Path, g: &Graph) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for (i, j) in g.edge_pairs() {
        writeln!(out, "{i} {j}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for l in labels {
        writeln!(out, "{l}")?;
    }
    out.flush()?;
    Ok(())
}

/// CSV feature writer; floats print in shortest round-trip form.
pub fn write_features_csv(path: &Path, features: &DMatrix<f64>) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for r in 0..features.nrows() {
        let row: Vec<String> = (0..features.ncols()).map(|c| features[(r, c)].to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Binary feature writer (header + row-major f32); values are narrowed to
/// f32 as the format demands.
pub fn write_features_binary(path: &Path, features: &DMatrix<f64>) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&(features.nrows() as u32).to_le_bytes())?;
    out.write_all(&(features.ncols() as u32).to_le_bytes())?;
    for r in 0..features.nrows() {
        for c in 0..features.ncols() {
            out.write_all(&(features[(r, c)] as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Per-round refinement trajectory as `round,loss,nnz`.
pub fn write_trajectory_csv(path: &Path, trajectory: &[TrajectoryPoint]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "round,loss,nnz")?;
    for p in trajectory {
        writeln!(out, "{},{},{}", p.round, p.loss, p.nnz)?;
    }
    out.flush()?;
    Ok(())
}

/// Per-epoch loss log as `epoch,infonce,lower,upper,total` (1-based epochs).
pub fn write_training_log_csv(path: &Path, log: &[LossBreakdown]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,infonce,lower,upper,total")?;
    for (idx, b) in log.iter().enumerate() {
        writeln!(out, "{},{},{},{},{}", idx + 1, b.infonce, b.lower, b.upper, b.total)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a training log back; used by tests and the sweep summaries.
pub fn read_training_log_csv(path: &Path) -> Result<Vec<LossBreakdown>> {
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("epoch,infonce,lower,upper,total") => {}
        other => {
            return Err(Error::Data(format!("{}: bad header {other:?}", path.display())));
        }
    }
    let mut log = Vec::new();
    for (idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Data(format!(
                "{}:{}: expected 5 fields",
                path.display(),
                idx + 2
            )));
        }
        let parse = |f: &str| {
            f.parse::<f64>().map_err(|_| {
                Error::Data(format!("{}:{}: bad real {f:?}", path.display(), idx + 2))
            })
        };
        log.push(LossBreakdown {
            infonce: parse(fields[1])?,
            lower: parse(fields[2])?,
            upper: parse(fields[3])?,
            total: parse(fields[4])?,
        });
    }
    Ok(log)
}
