//! Spectrum-preserving topology augmentation.
//!
//! A flip-probability matrix `delta` assigns every node pair a probability of
//! toggling its edge. The relaxed augmented adjacency `A + C .* delta` (with
//! `C` the flip-direction matrix) is treated as a weighted graph, and `delta`
//! is optimized by projected gradient descent so that the sorted eigenvalue
//! vector of its normalized Laplacian stays close to the original spectrum:
//!
//! ```text
//! loss(delta) = || eig(Lap(A + C .* delta)) - eig(Lap(A)) ||_2^2
//! ```
//!
//! The gradient is analytic: the derivative of a simple eigenvalue of a
//! symmetric matrix is `u_k u_k^T`, chained through the degree-dependent
//! normalization `I - D^{-1/2} A D^{-1/2}` and the flip direction. Views are
//! then sampled per pair with one Bernoulli draw each.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{self, Graph, SymNormLaplacian, DEGREE_TOL};

/// Eigenvalue gaps below this make the gradient ill-defined; the optimizer
/// responds by adding symmetric noise to the adjacency before re-solving.
pub const SPECTRAL_GAP_TOL: f64 = 1e-8;

/// Default scale of the stabilizing symmetric noise.
pub const NOISE_SCALE_DEFAULT: f64 = 1e-6;

/// Kept-entry cap for a budget fraction: `floor(eps * n^2)`. The tiny bump
/// keeps exact products (0.2 * 25 = 5) from flooring down under roundoff.
pub fn entry_budget(n: usize, eps: f64) -> usize {
    (eps * (n * n) as f64 + 1e-9).floor() as usize
}

/// `+1` where an edge can be added, `-1` where one can be removed, 0 on the
/// diagonal. A single mask then encodes both operations via `A + C .* M`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipDirection {
    matrix: DMatrix<f64>,
}

impl FlipDirection {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// Flip-direction matrix of a graph: off-diagonal `1 - 2 A_ij`.
pub fn flip_direction(g: &Graph) -> FlipDirection {
    let n = g.n();
    let a = g.adjacency();
    let matrix = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 - 2.0 * a[(i, j)] });
    FlipDirection { matrix }
}

/// Per-pair flip probabilities under an L0 budget.
///
/// Canonical instances come from [`project_delta`] and are symmetric, zero on
/// the diagonal, entrywise in [0, 1], and have at most `floor(eps * n^2)`
/// nonzero entries. The raw constructor checks only shape, budget range, and
/// the zero diagonal, so derivative checks may probe single entries slightly
/// outside the box; [`spectral_loss`] symmetrizes its input internally and
/// never clamps, which keeps those probes meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipProbability {
    delta: DMatrix<f64>,
    budget: f64,
}

impl FlipProbability {
    pub fn new(delta: DMatrix<f64>, budget: f64) -> Result<Self> {
        if !(budget > 0.0 && budget <= 1.0) {
            return Err(Error::InvalidBudget(budget));
        }
        let n = delta.nrows();
        if delta.ncols() != n {
            return Err(Error::ShapeMismatch {
                expected: "square flip-probability matrix".into(),
                got: format!("{}x{}", delta.nrows(), delta.ncols()),
            });
        }
        for i in 0..n {
            if delta[(i, i)] != 0.0 {
                return Err(Error::Data(format!("flip probability ({i}, {i}) on the diagonal")));
            }
        }
        Ok(FlipProbability { delta, budget })
    }

    pub fn n(&self) -> usize {
        self.delta.nrows()
    }

    pub fn delta(&self) -> &DMatrix<f64> {
        &self.delta
    }

    /// Budget fraction eps.
    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Number of nonzero entries (symmetric pairs count twice).
    pub fn nnz(&self) -> usize {
        self.delta.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn entry_budget(&self) -> usize {
        entry_budget(self.n(), self.budget)
    }

    /// Full invariant check for canonical instances: symmetry, zero diagonal,
    /// entries in [0, 1], nonzero count within budget.
    pub fn validate_canonical(&self) -> Result<()> {
        let n = self.n();
        for i in 0..n {
            for j in 0..n {
                let v = self.delta[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Data(format!("flip probability ({i}, {j}) = {v}")));
                }
                if v != self.delta[(j, i)] {
                    return Err(Error::Data(format!("flip probabilities asymmetric at ({i}, {j})")));
                }
            }
        }
        if self.nnz() > self.entry_budget() {
            return Err(Error::Data(format!(
                "{} nonzero flip probabilities exceed budget {}",
                self.nnz(),
                self.entry_budget()
            )));
        }
        Ok(())
    }
}

/// Sampled 0/1 flip decisions, symmetric with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipMask {
    matrix: DMatrix<f64>,
}

impl FlipMask {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Number of flipped unordered pairs.
    pub fn flip_count(&self) -> usize {
        let n = self.matrix.nrows();
        let mut c = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if self.matrix[(i, j)] == 1.0 {
                    c += 1;
                }
            }
        }
        c
    }
}

/// The two per-view flip-probability matrices plus the optimizer settings
/// that produced them.
#[derive(Debug, Clone)]
pub struct PerturbationPlan {
    pub delta_1: FlipProbability,
    pub delta_2: FlipProbability,
    pub rounds: usize,
    pub step: f64,
    pub noise_scale: f64,
}

impl PerturbationPlan {
    pub fn new(
        delta_1: FlipProbability,
        delta_2: FlipProbability,
        rounds: usize,
        step: f64,
        noise_scale: f64,
    ) -> Result<Self> {
        delta_1.validate_canonical()?;
        delta_2.validate_canonical()?;
        if rounds == 0 {
            return Err(Error::Config("perturbation rounds must be at least 1".into()));
        }
        if !(step > 0.0) {
            return Err(Error::Config(format!("perturbation step must be positive, got {step}")));
        }
        if !(noise_scale >= 0.0) {
            return Err(Error::Config(format!("noise scale must be nonnegative, got {noise_scale}")));
        }
        Ok(PerturbationPlan { delta_1, delta_2, rounds, step, noise_scale })
    }
}

/// One point of the optimization trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub round: usize,
    pub loss: f64,
    pub nnz: usize,
}

/// Result of [`optimize_delta`]: the final probabilities and the per-round
/// loss/sparsity trajectory (entry 0 is the projected initialization).
#[derive(Debug, Clone)]
pub struct DeltaOptimization {
    pub delta: FlipProbability,
    pub trajectory: Vec<TrajectoryPoint>,
}

fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `A + C .* S` for a symmetric relaxed flip matrix `S`.
fn augmented_adjacency(a: &DMatrix<f64>, c: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| a[(i, j)] + c[(i, j)] * s[(i, j)])
}

/// Sorted eigenvalues of the normalized Laplacian, values-only solver.
fn laplacian_eigenvalues(adjacency: &DMatrix<f64>) -> Result<DVector<f64>> {
    let lap = SymNormLaplacian::from_weighted_adjacency(adjacency)?;
    let mut vals: Vec<f64> = lap.matrix().symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
    Ok(DVector::from_vec(vals))
}

/// Squared distance between sorted spectra of `Lap(a_tilde)` and the
/// precomputed base spectrum.
fn loss_from(base: &DVector<f64>, a_tilde: &DMatrix<f64>) -> Result<f64> {
    let tilde = laplacian_eigenvalues(a_tilde)?;
    Ok((&tilde - base).norm_squared())
}

/// Analytic gradient of the spectral loss with respect to the relaxed flip
/// matrix, given the base spectrum (full-solver route, sorted ascending) and
/// the augmented adjacency. Errors with [`Error::DegenerateSpectrum`] when
/// the augmented spectrum has a gap below [`SPECTRAL_GAP_TOL`] and a nonzero
/// residual; a residual that is identically zero short-circuits to the zero
/// gradient, which is exact regardless of eigenvector choice.
fn grad_from(
    base: &DVector<f64>,
    a_tilde: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a_tilde.nrows();
    let lap = SymNormLaplacian::from_weighted_adjacency(a_tilde)?;
    let eig = graph::eigendecompose_sym(lap.matrix())?;
    let residual = DVector::from_fn(n, |k, _| 2.0 * (eig.eigenvalues()[k] - base[k]));
    if residual.amax() <= 1e-14 {
        return Ok(DMatrix::zeros(n, n));
    }
    let gap = eig.min_gap();
    if gap < SPECTRAL_GAP_TOL {
        return Err(Error::DegenerateSpectrum { gap, tol: SPECTRAL_GAP_TOL });
    }
    // Sensitivity of the loss to the Laplacian: T = sum_k 2 (l~_k - l_k) u_k u_k^T.
    let u = eig.eigenvectors();
    let t = u * DMatrix::from_diagonal(&residual) * u.transpose();
    // Chain through L~ = I - diag(s) A~ diag(s) with s_a = d_a^{-1/2}:
    //   dLoss/dA~_ab = -s_a s_b T_ab + (s_a^3 r_a + s_b^3 r_b) / 2,
    // where r_a = sum_q T_aq s_q A~_aq collects the degree dependence.
    let s = DVector::from_fn(n, |i, _| {
        let d = a_tilde.row(i).sum();
        if d > DEGREE_TOL {
            1.0 / d.sqrt()
        } else {
            0.0
        }
    });
    let r = DVector::from_fn(n, |a, _| {
        let mut acc = 0.0;
        for q in 0..n {
            acc += t[(a, q)] * s[q] * a_tilde[(a, q)];
        }
        acc
    });
    let grad = DMatrix::from_fn(n, n, |a, b| {
        let p = -s[a] * s[b] * t[(a, b)]
            + 0.5 * s[a].powi(3) * r[a]
            + 0.5 * s[b].powi(3) * r[b];
        c[(a, b)] * p
    });
    Ok(grad)
}

/// Spectral-variation loss of a flip-probability matrix. The input is
/// symmetrized as `(delta + delta^T) / 2` and not clamped, so single-entry
/// derivative probes see the same smooth function the gradient differentiates.
pub fn spectral_loss(g: &Graph, delta: &FlipProbability) -> Result<f64> {
    let c = flip_direction(g);
    let base = laplacian_eigenvalues(g.adjacency())?;
    let s = symmetrized(delta.delta());
    loss_from(&base, &augmented_adjacency(g.adjacency(), c.matrix(), &s))
}

/// Gradient of [`spectral_loss`] with respect to every entry of `delta`.
/// Symmetric with zero diagonal. Fails with [`Error::DegenerateSpectrum`]
/// when the augmented spectrum has repeated eigenvalues and a nonzero
/// residual; [`optimize_delta`] recovers by noising the adjacency.
pub fn spectral_loss_grad(g: &Graph, delta: &FlipProbability) -> Result<DMatrix<f64>> {
    let c = flip_direction(g);
    let base_eig = graph::eigendecompose(&graph::sym_norm_laplacian(g))?;
    let s = symmetrized(delta.delta());
    grad_from(
        base_eig.eigenvalues(),
        &augmented_adjacency(g.adjacency(), c.matrix(), &s),
        c.matrix(),
    )
}

/// Adds symmetric uniform noise `scale * (E + E^T) / 2` with `E_ij ~ U(0,1)`
/// drawn row-major over all entries. The result stays within `scale` of the
/// input in max norm; `scale = 0` returns the input bit-exactly while still
/// consuming the same draws.
pub fn symmetry_noise<R: Rng>(a: &DMatrix<f64>, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let n = a.nrows();
    let mut e = DMatrix::zeros(n, a.ncols());
    for i in 0..n {
        for j in 0..a.ncols() {
            e[(i, j)] = rng.gen::<f64>();
        }
    }
    let sym = (&e + e.transpose()) * 0.5;
    a + sym * scale
}

/// Projects a raw matrix onto the feasible set: symmetrize, zero the
/// diagonal, clamp to [0, 1], then keep the `floor(eps * n^2)` largest
/// entries with symmetric pairs kept or dropped together. Ties break toward
/// the lower `(i, j)` row-major index.
pub fn project_delta(raw: &DMatrix<f64>, eps: f64) -> Result<FlipProbability> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidBudget(eps));
    }
    let n = raw.nrows();
    if raw.ncols() != n {
        return Err(Error::ShapeMismatch {
            expected: "square matrix".into(),
            got: format!("{}x{}", raw.nrows(), raw.ncols()),
        });
    }
    let mut s = symmetrized(raw);
    for i in 0..n {
        s[(i, i)] = 0.0;
        for j in 0..n {
            s[(i, j)] = s[(i, j)].clamp(0.0, 1.0);
        }
    }
    let pairs_keep = entry_budget(n, eps) / 2;
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j));
        }
    }
    pairs.sort_by(|&p, &q| {
        s[(q.0, q.1)]
            .partial_cmp(&s[(p.0, p.1)])
            .expect("clamped entries are finite")
            .then(p.cmp(&q))
    });
    for &(i, j) in pairs.iter().skip(pairs_keep) {
        s[(i, j)] = 0.0;
        s[(j, i)] = 0.0;
    }
    FlipProbability::new(s, eps)
}

/// The projected all-equal initialization: every off-diagonal entry set to
/// `eps`, then budget-projected. Also serves as the fixed augmentation when
/// spectral optimization is disabled.
pub fn uniform_projected(n: usize, eps: f64) -> Result<FlipProbability> {
    let raw = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { eps });
    project_delta(&raw, eps)
}

/// Minimizes the spectral loss by `rounds` iterations of gradient step plus
/// budget projection, starting from the projected all-equal matrix.
///
/// Each round evaluates the candidate loss and, when it would increase,
/// retries the round with a halved step up to 5 times before keeping the
/// previous iterate, so the recorded trajectory never increases. A round
/// whose gradient eigensolve hits a repeated spectrum re-solves on a noised
/// copy of the augmented adjacency (scale starting at `noise_scale`,
/// escalating tenfold per attempt; 0 disables the retries); the noise
/// touches only that eigensolve, never the iterate or the loss accounting.
pub fn optimize_delta<R: Rng>(
    g: &Graph,
    eps: f64,
    rounds: usize,
    eta: f64,
    noise_scale: f64,
    rng: &mut R,
) -> Result<DeltaOptimization> {
    if rounds == 0 {
        return Err(Error::Config("optimize_delta requires at least 1 round".into()));
    }
    if !(eta >= 0.0) {
        return Err(Error::Config(format!("step size must be nonnegative, got {eta}")));
    }
    if !(noise_scale >= 0.0) {
        return Err(Error::Config(format!("noise scale must be nonnegative, got {noise_scale}")));
    }
    let a = g.adjacency();
    let c_dir = flip_direction(g);
    let c = c_dir.matrix();
    let base_loss = laplacian_eigenvalues(a)?;
    let base_grad = graph::eigendecompose(&graph::sym_norm_laplacian(g))?.eigenvalues().clone();

    let mut delta = uniform_projected(g.n(), eps)?;
    let mut loss = loss_from(&base_loss, &augmented_adjacency(a, c, delta.delta()))?;
    let mut trajectory = vec![TrajectoryPoint { round: 0, loss, nnz: delta.nnz() }];

    for round in 1..=rounds {
        let a_tilde = augmented_adjacency(a, c, delta.delta());
        let grad = {
            let mut attempt = 0;
            loop {
                let target = if attempt == 0 {
                    a_tilde.clone()
                } else {
                    let scale = noise_scale * 10f64.powi(attempt - 1);
                    symmetry_noise(&a_tilde, scale, rng)
                };
                match grad_from(&base_grad, &target, c) {
                    Ok(gr) => break gr,
                    Err(Error::DegenerateSpectrum { .. }) if attempt < 5 && noise_scale > 0.0 => {
                        attempt += 1
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        let mut step = eta;
        for _halving in 0..=5 {
            let cand_raw = delta.delta() - &grad * step;
            let cand = project_delta(&cand_raw, eps)?;
            let cand_loss = loss_from(&base_loss, &augmented_adjacency(a, c, cand.delta()))?;
            if cand_loss <= loss {
                delta = cand;
                loss = cand_loss;
                break;
            }
            step *= 0.5;
        }
        trajectory.push(TrajectoryPoint { round, loss, nnz: delta.nnz() });
    }
    Ok(DeltaOptimization { delta, trajectory })
}

/// Draws the 0/1 flip mask: one Bernoulli draw per unordered pair `(i, j)`
/// with `i < j` in row-major order, mirrored to `(j, i)`. Pairs with zero
/// probability consume no randomness.
pub fn sample_mask<R: Rng>(delta: &FlipProbability, rng: &mut R) -> FlipMask {
    let n = delta.n();
    let d = delta.delta();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = d[(i, j)];
            if p != 0.0 && rng.gen::<f64>() < p {
                m[(i, j)] = 1.0;
                m[(j, i)] = 1.0;
            }
        }
    }
    FlipMask { matrix: m }
}

/// `A + C .* M`: flips exactly the masked pairs. Features and labels carry
/// over unchanged.
pub fn apply_mask(g: &Graph, mask: &FlipMask) -> Result<Graph> {
    let n = g.n();
    if mask.matrix.nrows() != n || mask.matrix.ncols() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}x{n} mask"),
            got: format!("{}x{}", mask.matrix.nrows(), mask.matrix.ncols()),
        });
    }
    let a = g.adjacency();
    let adj = DMatrix::from_fn(n, n, |i, j| {
        if i != j && mask.matrix[(i, j)] == 1.0 {
            1.0 - a[(i, j)]
        } else {
            a[(i, j)]
        }
    });
    g.with_adjacency(adj)
}

/// Samples an augmented view: Bernoulli mask from `delta`, then edge flips.
pub fn sample_augmented<R: Rng>(g: &Graph, delta: &FlipProbability, rng: &mut R) -> Result<Graph> {
    apply_mask(g, &sample_mask(delta, rng))
}
