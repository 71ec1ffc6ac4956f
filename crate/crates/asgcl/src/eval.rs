//! Downstream protocols: linear-probe node classification, k-means node
//! clustering scored by matched-assignment metrics, and the robustness
//! perturbation used for structure/feature noise sweeps.
//!
//! Embeddings for every downstream task come from the view-1 composition on
//! the original, unaugmented graph. Metrics are aggregated over seeds with
//! population standard deviation; per-seed runs are independent and the
//! aggregation order is fixed by the seed list.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::encoder::{embed, EncoderWeights};
use crate::error::{Error, Result};
use crate::graph::{build_graph, Graph};
use crate::trainer::{ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

/// Canonical split proportions: 10% train, 10% validation, 80% test.
pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.1, 0.1, 0.8);

/// Probe optimizer settings; plumbing, fixed for reproducibility.
pub const PROBE_LR: f64 = 0.01;
/// Full-batch probe steps.
pub const PROBE_STEPS: usize = 300;
/// Attempts at re-drawing a split whose training mask misses a class.
const REDRAW_CAP: usize = 100;

/// k-means restarts per call; the lowest-inertia restart wins.
pub const KMEANS_RESTARTS: u64 = 10;
/// Iteration cap per restart.
pub const KMEANS_MAX_ITERS: usize = 300;
/// Empty-cluster re-seeds allowed per restart after convergence.
const KMEANS_RESEEDS: usize = 5;

fn shuffle<R: Rng>(perm: &mut [usize], rng: &mut R) {
    for i in (1..perm.len()).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
}

/// Disjoint train/validation/test masks covering every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    train: Vec<bool>,
    val: Vec<bool>,
    test: Vec<bool>,
}

impl Split {
    /// Number of nodes covered.
    pub fn n(&self) -> usize {
        self.train.len()
    }

    pub fn train(&self) -> &[bool] {
        &self.train
    }

    pub fn val(&self) -> &[bool] {
        &self.val
    }

    pub fn test(&self) -> &[bool] {
        &self.test
    }

    fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    fn from_permutation(perm: &[usize], train_size: usize, val_size: usize) -> Split {
        let n = perm.len();
        let mut train = vec![false; n];
        let mut val = vec![false; n];
        let mut test = vec![false; n];
        for (pos, &node) in perm.iter().enumerate() {
            if pos < train_size {
                train[node] = true;
            } else if pos < train_size + val_size {
                val[node] = true;
            } else {
                test[node] = true;
            }
        }
        Split { train, val, test }
    }

    /// New uniform split with the same part sizes; used when the training
    /// mask fails to cover every class.
    fn reshuffled<R: Rng>(&self, rng: &mut R) -> Split {
        let n = self.n();
        let train_size = self.train.iter().filter(|&&b| b).count();
        let val_size = self.val.iter().filter(|&&b| b).count();
        let mut perm: Vec<usize> = (0..n).collect();
        shuffle(&mut perm, rng);
        Split::from_permutation(&perm, train_size, val_size)
    }
}

/// Uniform random partition into train/validation/test by the given
/// proportions. Part sizes are floors of `p * n` with the remainder going to
/// the test part, so (0.1, 0.1, 0.8) at n = 10 yields sizes (1, 1, 8).
///
/// Errors when n < 10, when the proportions do not sum to 1, or when a part
/// would round down to zero nodes.
pub fn make_split(n: usize, proportions: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (p_train, p_val, p_test) = proportions;
    if n < 10 {
        return Err(Error::Config(format!("split needs at least 10 nodes, got {n}")));
    }
    for p in [p_train, p_val, p_test] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Config(format!("split proportion {p} outside (0, 1)")));
        }
    }
    if ((p_train + p_val + p_test) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split proportions must sum to 1, got {}",
            p_train + p_val + p_test
        )));
    }
    let train_size = (p_train * n as f64).floor() as usize;
    let val_size = (p_val * n as f64).floor() as usize;
    let test_size = n - train_size - val_size;
    if train_size == 0 || val_size == 0 || test_size == 0 {
        return Err(Error::Config(format!(
            "split sizes ({train_size}, {val_size}, {test_size}) must all be positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    shuffle(&mut perm, &mut rng);
    Ok(Split::from_permutation(&perm, train_size, val_size))
}

fn adam_inplace(
    param: &mut DMatrix<f64>,
    grad: &DMatrix<f64>,
    m: &mut DMatrix<f64>,
    v: &mut DMatrix<f64>,
    step: i32,
    lr: f64,
) {
    let corr1 = 1.0 - ADAM_BETA1.powi(step);
    let corr2 = 1.0 - ADAM_BETA2.powi(step);
    let (p, g, m, v) =
        (param.as_mut_slice(), grad.as_slice(), m.as_mut_slice(), v.as_mut_slice());
    for i in 0..p.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        p[i] -= lr * (m[i] / corr1) / ((v[i] / corr2).sqrt() + ADAM_EPS);
    }
}

/// Highest-scoring class for each listed row; ties go to the lowest index.
fn predict(
    h: &DMatrix<f64>,
    rows: &[usize],
    w: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Vec<usize> {
    let (feat, classes) = w.shape();
    rows.iter()
        .map(|&r| {
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for c in 0..classes {
                let mut z = b[(0, c)];
                for f in 0..feat {
                    z += h[(r, f)] * w[(f, c)];
                }
                if z > best_score {
                    best_score = z;
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn accuracy_on(pred: &[usize], rows: &[usize], labels: &[usize]) -> f64 {
    let correct = pred.iter().zip(rows).filter(|(p, &r)| **p == labels[r]).count();
    correct as f64 / rows.len() as f64
}

/// Fits one linear layer with softmax cross-entropy on frozen embeddings
/// (full-batch Adam, [`PROBE_LR`], [`PROBE_STEPS`] steps), picks the first
/// step with the best validation accuracy, and returns test accuracy.
///
/// Labels must be contiguous `0..classes` over all nodes. A split whose
/// training mask misses a class is re-drawn with the same part sizes (logged);
/// after 100 failed draws this is a data error.
pub fn linear_probe(
    h: &DMatrix<f64>,
    labels: &[usize],
    split: &Split,
    seed: u64,
) -> Result<f64> {
    let n = h.nrows();
    if labels.len() != n || split.n() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} labels and mask entries"),
            got: format!("{} labels, {} mask entries", labels.len(), split.n()),
        });
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    if classes == 0 {
        return Err(Error::Config("probe needs at least one labeled node".into()));
    }

    let mut redraw_rng = ChaCha8Rng::seed_from_u64(seed);
    redraw_rng.set_stream(101);
    let mut split = split.clone();
    let mut attempts = 0;
    loop {
        let mut seen = vec![false; classes];
        for i in 0..n {
            if split.train()[i] {
                seen[labels[i]] = true;
            }
        }
        if seen.iter().all(|&s| s) {
            break;
        }
        attempts += 1;
        if attempts > REDRAW_CAP {
            return Err(Error::Data(format!(
                "training mask cannot cover all {classes} classes after {REDRAW_CAP} re-draws"
            )));
        }
        log::warn!("training mask misses a class; re-drawing the split (attempt {attempts})");
        split = split.reshuffled(&mut redraw_rng);
    }

    let train_idx = Split::indices(split.train());
    let val_idx = Split::indices(split.val());
    let test_idx = Split::indices(split.test());
    let feat = h.ncols();
    let t = train_idx.len();
    let mut h_train = DMatrix::zeros(t, feat);
    for (row, &node) in train_idx.iter().enumerate() {
        for f in 0..feat {
            h_train[(row, f)] = h[(node, f)];
        }
    }

    let mut w = DMatrix::zeros(feat, classes);
    let mut b = DMatrix::zeros(1, classes);
    let (mut mw, mut vw) = (DMatrix::zeros(feat, classes), DMatrix::zeros(feat, classes));
    let (mut mb, mut vb) = (DMatrix::zeros(1, classes), DMatrix::zeros(1, classes));
    let mut best_val = f64::NEG_INFINITY;
    let mut best = (w.clone(), b.clone());

    for step in 1..=PROBE_STEPS {
        let mut probs = &h_train * &w;
        for r in 0..t {
            let mut row_max = f64::NEG_INFINITY;
            for c in 0..classes {
                probs[(r, c)] += b[(0, c)];
                row_max = row_max.max(probs[(r, c)]);
            }
            let mut denom = 0.0;
            for c in 0..classes {
                probs[(r, c)] = (probs[(r, c)] - row_max).exp();
                denom += probs[(r, c)];
            }
            for c in 0..classes {
                probs[(r, c)] /= denom;
            }
        }
        for (row, &node) in train_idx.iter().enumerate() {
            probs[(row, labels[node])] -= 1.0;
        }
        probs /= t as f64;

        let dw = h_train.transpose() * &probs;
        let db = DMatrix::from_fn(1, classes, |_, c| probs.column(c).sum());
        adam_inplace(&mut w, &dw, &mut mw, &mut vw, step as i32, PROBE_LR);
        adam_inplace(&mut b, &db, &mut mb, &mut vb, step as i32, PROBE_LR);

        let val_acc = accuracy_on(&predict(h, &val_idx, &w, &b), &val_idx, labels);
        if val_acc > best_val {
            best_val = val_acc;
            best = (w.clone(), b.clone());
        }
    }

    let (w, b) = best;
    Ok(accuracy_on(&predict(h, &test_idx, &w, &b), &test_idx, labels))
}

fn sq_dist_row(h: &DMatrix<f64>, row: usize, centroid: &[f64]) -> f64 {
    let mut d = 0.0;
    for (f, c) in centroid.iter().enumerate() {
        let diff = h[(row, f)] - c;
        d += diff * diff;
    }
    d
}

/// One k-means run: k-means++ seeding, hard assignment with lowest-index tie
/// breaks, mean updates, and post-convergence empty-cluster re-seeding.
fn kmeans_once(
    h: &DMatrix<f64>,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, f64)> {
    let n = h.nrows();
    let feat = h.ncols();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.gen_range(0..n);
    centroids.push((0..feat).map(|f| h[(first, f)]).collect());
    let mut nearest: Vec<f64> = (0..n).map(|r| sq_dist_row(h, r, &centroids[0])).collect();
    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (r, d) in nearest.iter().enumerate() {
                u -= d;
                if u <= 0.0 {
                    chosen = r;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c: Vec<f64> = (0..feat).map(|f| h[(pick, f)]).collect();
        for r in 0..n {
            nearest[r] = nearest[r].min(sq_dist_row(h, r, &c));
        }
        centroids.push(c);
    }

    let assign = |centroids: &[Vec<f64>]| -> Vec<usize> {
        (0..n)
            .map(|r| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (c, centroid) in centroids.iter().enumerate() {
                    let d = sq_dist_row(h, r, centroid);
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                best
            })
            .collect()
    };

    let mut assignments = vec![usize::MAX; n];
    let mut reseeds = 0;
    for _ in 0..KMEANS_MAX_ITERS {
        let next = assign(&centroids);
        let converged = next == assignments;
        assignments = next;
        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        if converged {
            let empties: Vec<usize> =
                (0..k).filter(|&c| counts[c] == 0).collect();
            if empties.is_empty() {
                break;
            }
            if reseeds >= KMEANS_RESEEDS {
                return Err(Error::Numeric(format!(
                    "k-means cluster stayed empty after {KMEANS_RESEEDS} re-seeds"
                )));
            }
            reseeds += 1;
            for c in empties {
                let pick = rng.gen_range(0..n);
                centroids[c] = (0..feat).map(|f| h[(pick, f)]).collect();
            }
            assignments = vec![usize::MAX; n];
            continue;
        }
        // Mean update; clusters empty mid-run keep their previous centroid.
        for (c, centroid) in centroids.iter_mut().enumerate() {
            if counts[c] == 0 {
                continue;
            }
            centroid.iter_mut().for_each(|x| *x = 0.0);
            for r in 0..n {
                if assignments[r] == c {
                    for (f, x) in centroid.iter_mut().enumerate() {
                        *x += h[(r, f)];
                    }
                }
            }
            centroid.iter_mut().for_each(|x| *x /= counts[c] as f64);
        }
    }
    let mut counts = vec![0usize; k];
    for &a in &assignments {
        counts[a] += 1;
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::Numeric("k-means ended with an empty cluster".into()));
    }
    let inertia: f64 =
        (0..n).map(|r| sq_dist_row(h, r, &centroids[assignments[r]])).sum();
    Ok((assignments, inertia))
}

/// Maximum-weight perfect assignment on a square score matrix, by the
/// Hungarian algorithm with potentials. Returns, per row, the assigned
/// column. O(k^3), deterministic.
pub fn max_assignment(scores: &DMatrix<f64>) -> Vec<usize> {
    let k = scores.nrows();
    assert_eq!(k, scores.ncols(), "assignment needs a square matrix");
    // Minimize negated scores; 1-based arrays, column 0 is the virtual root.
    let cost = |r: usize, c: usize| -scores[(r, c)];
    let mut u = vec![0.0f64; k + 1];
    let mut v = vec![0.0f64; k + 1];
    let mut matched_row = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; k];
    for j in 1..=k {
        row_to_col[matched_row[j] - 1] = j - 1;
    }
    row_to_col
}

fn comb2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Mutual information normalized by the arithmetic mean of the entropies.
/// Two zero-entropy partitions score 1; exactly one scores 0.
fn normalized_mutual_information(counts: &DMatrix<f64>, n: f64) -> f64 {
    let (rows, cols) = counts.shape();
    let row_sums: Vec<f64> = (0..rows).map(|i| counts.row(i).sum()).collect();
    let col_sums: Vec<f64> = (0..cols).map(|j| counts.column(j).sum()).collect();
    let mut info = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let nij = counts[(i, j)];
            if nij > 0.0 {
                info += nij / n * (n * nij / (row_sums[i] * col_sums[j])).ln();
            }
        }
    }
    let entropy = |sums: &[f64]| -
        sums.iter()
            .filter(|&&s| s > 0.0)
            .map(|&s| s / n * (s / n).ln())
            .sum::<f64>();
    let (hu, hv) = (entropy(&row_sums), entropy(&col_sums));
    if hu == 0.0 && hv == 0.0 {
        return 1.0;
    }
    if hu == 0.0 || hv == 0.0 {
        return 0.0;
    }
    (info / (0.5 * (hu + hv))).clamp(0.0, 1.0)
}

/// Adjusted Rand index. A zero adjustment denominator means both partitions
/// are trivial and identical in pair structure, which scores 1.
fn adjusted_rand_index(counts: &DMatrix<f64>, n: f64) -> f64 {
    let (rows, cols) = counts.shape();
    let sum_cells: f64 =
        (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| comb2(counts[(i, j)])).sum();
    let sum_rows: f64 = (0..rows).map(|i| comb2(counts.row(i).sum())).sum();
    let sum_cols: f64 = (0..cols).map(|j| comb2(counts.column(j).sum())).sum();
    let total = comb2(n);
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    let denom = max_index - expected;
    if denom.abs() < 1e-12 {
        return 1.0;
    }
    ((sum_cells - expected) / denom).clamp(-1.0, 1.0)
}

/// Per-run clustering scores; aggregation over seeds happens in
/// [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterScores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub fscore: f64,
}

/// Clusters the rows of `h` with k-means (k = `num_classes`,
/// [`KMEANS_RESTARTS`] restarts, k-means++ seeding, lowest inertia wins) and
/// scores the result against the labels: accuracy under the optimal
/// cluster-to-class assignment, NMI with arithmetic-mean normalization,
/// adjusted Rand index, and macro-F1 after the same assignment.
pub fn cluster_metrics(
    h: &DMatrix<f64>,
    labels: &[usize],
    num_classes: usize,
    seed: u64,
) -> Result<ClusterScores> {
    let n = h.nrows();
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} labels"),
            got: format!("{}", labels.len()),
        });
    }
    if num_classes < 2 {
        return Err(Error::Config(format!("clustering needs >= 2 classes, got {num_classes}")));
    }
    if n < num_classes {
        return Err(Error::Config(format!("{n} nodes cannot fill {num_classes} clusters")));
    }
    if labels.iter().any(|&l| l >= num_classes) {
        return Err(Error::Config(format!("label out of range for {num_classes} classes")));
    }

    let mut best: Option<(Vec<usize>, f64)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart);
        match kmeans_once(h, num_classes, &mut rng) {
            Ok((assignments, inertia)) => {
                if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
                    best = Some((assignments, inertia));
                }
            }
            Err(e) => log::warn!("k-means restart {restart} failed: {e}"),
        }
    }
    let Some((assignments, _)) = best else {
        return Err(Error::Numeric("every k-means restart ended degenerate".into()));
    };

    let k = num_classes;
    let mut counts = DMatrix::zeros(k, k);
    for (r, &cluster) in assignments.iter().enumerate() {
        counts[(cluster, labels[r])] += 1.0;
    }
    let nf = n as f64;
    let mapping = max_assignment(&counts);
    let matched: f64 = (0..k).map(|c| counts[(c, mapping[c])]).sum();
    let acc = matched / nf;
    let nmi = normalized_mutual_information(&counts, nf);
    let ari = adjusted_rand_index(&counts, nf);

    // Macro-F1 over classes with clusters renamed by the matching.
    let mut f_sum = 0.0;
    for class in 0..k {
        let cluster = mapping.iter().position(|&m| m == class).expect("permutation");
        let tp = counts[(cluster, class)];
        let predicted: f64 = counts.row(cluster).sum();
        let actual: f64 = counts.column(class).sum();
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        if precision + recall > 0.0 {
            f_sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(ClusterScores { acc, nmi, ari, fscore: f_sum / k as f64 })
}

/// Drops `⌊edge_drop * |E|⌋` uniformly chosen edges and zeroes
/// `⌊feature_mask * d⌋` uniformly chosen feature columns across all nodes.
/// Ratios live in [0, 0.8]; edges are drawn before columns.
pub fn perturb_for_robustness<R: Rng>(
    g: &Graph,
    edge_drop: f64,
    feature_mask: f64,
    rng: &mut R,
) -> Result<Graph> {
    for (name, ratio) in [("edge_drop", edge_drop), ("feature_mask", feature_mask)] {
        if !(0.0..=0.8).contains(&ratio) {
            return Err(Error::Config(format!("{name} must lie in [0, 0.8], got {ratio}")));
        }
    }
    let edges = g.edge_pairs();
    let drop_count = (edge_drop * edges.len() as f64).floor() as usize;
    let mut order: Vec<usize> = (0..edges.len()).collect();
    for t in 0..drop_count {
        let j = rng.gen_range(t..order.len());
        order.swap(t, j);
    }
    let mut dropped = vec![false; edges.len()];
    for &e in &order[..drop_count] {
        dropped[e] = true;
    }
    let kept: Vec<(usize, usize)> = edges
        .iter()
        .enumerate()
        .filter(|(e, _)| !dropped[*e])
        .map(|(_, &pair)| pair)
        .collect();

    let d = g.feature_dim();
    let mask_count = (feature_mask * d as f64).floor() as usize;
    let mut cols: Vec<usize> = (0..d).collect();
    for t in 0..mask_count {
        let j = rng.gen_range(t..cols.len());
        cols.swap(t, j);
    }
    let mut features = g.features().clone();
    for &c in &cols[..mask_count] {
        for r in 0..g.n() {
            features[(r, c)] = 0.0;
        }
    }
    build_graph(g.n(), &kept, features, g.labels().map(|l| l.to_vec()))
}

/// Downstream task selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTask {
    Classification,
    Clustering,
}

impl EvalTask {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvalTask::Classification => "classification",
            EvalTask::Clustering => "clustering",
        }
    }
}

/// Mean, population standard deviation, and the raw per-seed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    pub std: f64,
    pub per_seed: Vec<f64>,
}

impl MetricStat {
    pub fn from_values(values: &[f64]) -> MetricStat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MetricStat { mean, std: var.sqrt(), per_seed: values.to_vec() }
    }
}

/// Seed-aggregated metrics for one task on one dataset. Classification fills
/// `accuracy`; clustering fills the other four.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: EvalTask,
    pub dataset: String,
    pub seed_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<MetricStat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clustering_acc: Option<MetricStat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi: Option<MetricStat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ari: Option<MetricStat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fscore: Option<MetricStat>,
}

impl MetricReport {
    /// Present metrics in fixed order, for the flat writers.
    pub fn named_stats(&self) -> Vec<(&'static str, &MetricStat)> {
        [
            ("accuracy", &self.accuracy),
            ("clustering_acc", &self.clustering_acc),
            ("nmi", &self.nmi),
            ("ari", &self.ari),
            ("fscore", &self.fscore),
        ]
        .into_iter()
        .filter_map(|(name, stat)| stat.as_ref().map(|s| (name, s)))
        .collect()
    }
}

/// Embeds the unaugmented graph with the view-1 composition and runs the
/// chosen task once per seed, aggregating mean and population std.
pub fn evaluate(
    g: &Graph,
    weights: &EncoderWeights,
    raw_diffusion: bool,
    task: EvalTask,
    seeds: &[u64],
    dataset: &str,
) -> Result<MetricReport> {
    if seeds.is_empty() {
        return Err(Error::Config("evaluation needs at least one seed".into()));
    }
    let labels = g
        .labels()
        .ok_or_else(|| Error::Config("evaluation needs node labels".into()))?;
    let h = embed(g, weights, raw_diffusion)?;
    let mut report = MetricReport {
        task,
        dataset: dataset.to_string(),
        seed_count: seeds.len(),
        accuracy: None,
        clustering_acc: None,
        nmi: None,
        ari: None,
        fscore: None,
    };
    match task {
        EvalTask::Classification => {
            let mut accs = Vec::with_capacity(seeds.len());
            for &seed in seeds {
                let split = make_split(g.n(), DEFAULT_SPLIT, seed)?;
                accs.push(linear_probe(&h, labels, &split, seed)?);
            }
            report.accuracy = Some(MetricStat::from_values(&accs));
        }
        EvalTask::Clustering => {
            let classes = g
                .num_classes()
                .ok_or_else(|| Error::Config("evaluation needs node labels".into()))?;
            let (mut accs, mut nmis, mut aris, mut fs) =
                (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for &seed in seeds {
                let s = cluster_metrics(&h, labels, classes, seed)?;
                accs.push(s.acc);
                nmis.push(s.nmi);
                aris.push(s.ari);
                fs.push(s.fscore);
            }
            report.clustering_acc = Some(MetricStat::from_values(&accs));
            report.nmi = Some(MetricStat::from_values(&nmis));
            report.ari = Some(MetricStat::from_values(&aris));
            report.fscore = Some(MetricStat::from_values(&fs));
        }
    }
    Ok(report)
}

#[derive(Serialize)]
struct FlatRecord<'a> {
    task: &'a str,
    dataset: &'a str,
    metric: &'static str,
    seed_count: usize,
    mean: f64,
    std: f64,
    per_seed: &'a [f64],
}

/// One JSON record per metric: {task, dataset, metric, seed_count, mean,
/// std, per_seed}.
pub fn write_report_json(path: &Path, reports: &[MetricReport]) -> Result<()> {
    let records: Vec<FlatRecord> = reports
        .iter()
        .flat_map(|r| {
            r.named_stats().into_iter().map(|(metric, stat)| FlatRecord {
                task: r.task.as_str(),
                dataset: &r.dataset,
                metric,
                seed_count: r.seed_count,
                mean: stat.mean,
                std: stat.std,
                per_seed: &stat.per_seed,
            })
        })
        .collect();
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &records)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Flat CSV companion of [`write_report_json`], one row per metric.
pub fn write_report_csv(path: &Path, reports: &[MetricReport]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "task,dataset,metric,seed_count,mean,std")?;
    for r in reports {
        for (metric, stat) in r.named_stats() {
            writeln!(
                out,
                "{},{},{metric},{},{},{}",
                r.task.as_str(),
                r.dataset,
                r.seed_count,
                stat.mean,
                stat.std
            )?;
        }
    }
    out.flush()?;
    Ok(())
}
