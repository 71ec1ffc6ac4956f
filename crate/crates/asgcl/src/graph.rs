//! Dense graph storage, normalized Laplacian, and eigendecomposition.
//!
//! Everything downstream (augmentation, encoding, evaluation) builds on the
//! types here. Storage is dense `f64`; the intended scale is a few thousand
//! nodes, where the spectral steps are cubic anyway and sparsity buys nothing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Row sums at or below this threshold are treated as isolated when forming
/// `D^{-1/2}`; the scale factor is defined as 0 there, which keeps the
/// Laplacian total (diagonal 1, empty row) instead of dividing by zero.
pub const DEGREE_TOL: f64 = 1e-12;

/// An undirected graph: symmetric 0/1 adjacency without self-loops, an
/// `n x d` feature matrix, and optional node class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    adjacency: DMatrix<f64>,
    features: DMatrix<f64>,
    labels: Option<Vec<usize>>,
}

impl Graph {
    /// Validates and wraps the parts. The adjacency must be square `n x n`,
    /// symmetric, zero on the diagonal, and exactly 0/1 valued; features must
    /// have `n` rows; labels, when present, must have length `n`.
    pub fn new(
        adjacency: DMatrix<f64>,
        features: DMatrix<f64>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = adjacency.nrows();
        if adjacency.ncols() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{n} adjacency"),
                got: format!("{}x{}", adjacency.nrows(), adjacency.ncols()),
            });
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::SelfLoop { i });
            }
            for j in 0..n {
                let v = adjacency[(i, j)];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Data(format!(
                        "adjacency entry ({i}, {j}) is {v}, expected 0 or 1"
                    )));
                }
                if v != adjacency[(j, i)] {
                    return Err(Error::Data(format!(
                        "adjacency is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if features.nrows() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} feature rows"),
                got: format!("{}", features.nrows()),
            });
        }
        if let Some(ref l) = labels {
            if l.len() != n {
                return Err(Error::ShapeMismatch {
                    expected: format!("{n} labels"),
                    got: format!("{}", l.len()),
                });
            }
        }
        Ok(Graph { n, adjacency, features, labels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of undirected edges (unordered pairs with an edge).
    pub fn num_edges(&self) -> usize {
        let mut m = 0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.adjacency[(i, j)] == 1.0 {
                    m += 1;
                }
            }
        }
        m
    }

    /// Unordered edge pairs `(i, j)` with `i < j`, in row-major order.
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.adjacency[(i, j)] == 1.0 {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }

    /// Number of distinct label classes; labels are assumed contiguous from 0.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    /// Same features and labels over a different adjacency.
    pub fn with_adjacency(&self, adjacency: DMatrix<f64>) -> Result<Self> {
        Graph::new(adjacency, self.features.clone(), self.labels.clone())
    }

    /// Same adjacency and labels over a different feature matrix.
    pub fn with_features(&self, features: DMatrix<f64>) -> Result<Self> {
        Graph::new(self.adjacency.clone(), features, self.labels.clone())
    }

    pub fn degree_vector(&self) -> DegreeVector {
        DegreeVector::from_adjacency(&self.adjacency)
    }
}

/// Builds a graph from undirected index pairs. Both `(i, j)` and `(j, i)` are
/// set for every listed pair; duplicates collapse to one edge.
pub fn build_graph(
    n: usize,
    adjacency_pairs: &[(usize, usize)],
    features: DMatrix<f64>,
    labels: Option<Vec<usize>>,
) -> Result<Graph> {
    let mut adjacency = DMatrix::zeros(n, n);
    for &(i, j) in adjacency_pairs {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        if j >= n {
            return Err(Error::IndexOutOfRange { index: j, n });
        }
        if i == j {
            return Err(Error::SelfLoop { i });
        }
        adjacency[(i, j)] = 1.0;
        adjacency[(j, i)] = 1.0;
    }
    Graph::new(adjacency, features, labels)
}

/// Node degrees `d_i = sum_j A[i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVector {
    degrees: DVector<f64>,
}

impl DegreeVector {
    pub fn from_adjacency(adjacency: &DMatrix<f64>) -> Self {
        let n = adjacency.nrows();
        let degrees = DVector::from_fn(n, |i, _| adjacency.row(i).sum());
        DegreeVector { degrees }
    }

    pub fn degrees(&self) -> &DVector<f64> {
        &self.degrees
    }
}

/// The symmetric normalized Laplacian `I - D^{-1/2} A D^{-1/2}`.
///
/// Rows of isolated nodes (degree at most [`DEGREE_TOL`]) get diagonal 1 and
/// zero off-diagonals, so the operator is defined for every input.
#[derive(Debug, Clone, PartialEq)]
pub struct SymNormLaplacian {
    matrix: DMatrix<f64>,
}

impl SymNormLaplacian {
    /// Normalized Laplacian of an arbitrary symmetric weighted adjacency.
    /// Degrees are row sums; rows whose sum is at most [`DEGREE_TOL`] are
    /// treated as isolated.
    pub fn from_weighted_adjacency(adjacency: &DMatrix<f64>) -> Result<Self> {
        let n = adjacency.nrows();
        if adjacency.ncols() != n {
            return Err(Error::ShapeMismatch {
                expected: "square adjacency".into(),
                got: format!("{}x{}", adjacency.nrows(), adjacency.ncols()),
            });
        }
        let scale = inv_sqrt_degrees(adjacency);
        let mut matrix = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let off = -scale[i] * scale[j] * adjacency[(i, j)];
                matrix[(i, j)] = if i == j { 1.0 + off } else { off };
            }
        }
        Ok(SymNormLaplacian { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

/// `d_i^{-1/2}` per row, with 0 for rows at or below [`DEGREE_TOL`].
pub(crate) fn inv_sqrt_degrees(adjacency: &DMatrix<f64>) -> DVector<f64> {
    let n = adjacency.nrows();
    DVector::from_fn(n, |i, _| {
        let d = adjacency.row(i).sum();
        if d > DEGREE_TOL {
            1.0 / d.sqrt()
        } else {
            0.0
        }
    })
}

/// Normalized Laplacian of a graph's adjacency.
pub fn sym_norm_laplacian(g: &Graph) -> SymNormLaplacian {
    SymNormLaplacian::from_weighted_adjacency(g.adjacency())
        .expect("graph adjacency is square by construction")
}

/// Eigenvalues ascending with matching orthonormal eigenvector columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// `U diag(eigenvalues) U^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        u * DMatrix::from_diagonal(&self.eigenvalues) * u.transpose()
    }

    /// Smallest gap between consecutive (sorted) eigenvalues; infinity for n < 2.
    pub fn min_gap(&self) -> f64 {
        let ev = &self.eigenvalues;
        let mut gap = f64::INFINITY;
        for k in 1..ev.len() {
            gap = gap.min(ev[k] - ev[k - 1]);
        }
        gap
    }
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues sorted
/// ascending. The input must be symmetric; only that case is meaningful.
pub fn eigendecompose_sym(matrix: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::ShapeMismatch {
            expected: "square matrix".into(),
            got: format!("{}x{}", matrix.nrows(), matrix.ncols()),
        });
    }
    // Tolerances below ~1e-13 destabilize the shifted QR's eigenvector
    // accumulation (it reports convergence with invalid vectors), so keep
    // the sub-diagonal tolerance at 1e-12 and verify the residual after.
    let eig = nalgebra::SymmetricEigen::try_new(matrix.clone(), 1e-12, 100_000).ok_or_else(
        || Error::EigenFailure {
            diagnostics: format!(
                "n = {n}, frobenius norm = {:e}, max |entry| = {:e}",
                matrix.norm(),
                matrix.amax()
            ),
        },
    )?;
    let residual = (matrix * &eig.eigenvectors
        - &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues))
    .amax();
    // The QR occasionally settles near 1e-9 quality; invalid bases sit many
    // orders above that, so 1e-6 separates the two regimes cleanly.
    let tol = 1e-6 * matrix.amax().max(1.0);
    if !residual.is_finite() || residual > tol {
        return Err(Error::EigenFailure {
            diagnostics: format!("eigenpair residual {residual:e} exceeds {tol:e} at n = {n}"),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("symmetric eigenvalues are finite")
    });
    let eigenvalues = DVector::from_fn(n, |k, _| eig.eigenvalues[order[k]]);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        eigenvectors.set_column(k, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

/// Eigendecomposition of a normalized Laplacian.
pub fn eigendecompose(l: &SymNormLaplacian) -> Result<EigenDecomposition> {
    eigendecompose_sym(l.matrix())
}

/// `sqrt(sum_ij (a_ij - b_ij)^2)` over equal-shaped matrices.
pub fn frobenius_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", a.nrows(), a.ncols()),
            got: format!("{}x{}", b.nrows(), b.ncols()),
        });
    }
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        sum += d * d;
    }
    Ok(sum.sqrt())
}
