//! The asymmetric encoder pair.
//!
//! Both views share the same stack of transformation weights; they differ in
//! the diffusion operator (each view diffuses over its own augmented graph)
//! and in depth: view 2 appends `k` extra diffusion applications after the
//! shared stack. One layer is `H -> act(S H W)`; hidden layers rectify, the
//! final transformation is linear so embeddings stay unbounded.
//!
//! The backward pass is written out by hand against a tape of retained
//! intermediates, summing the contributions both views push into the shared
//! weights.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, DEGREE_TOL};

/// Elementwise activation of a transformation layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `max(0, x)`; hidden layers.
    Rectifier,
    /// Pass-through; the final layer.
    Identity,
}

/// The shared transformation stack: `layers` weight matrices (first `d x h`,
/// the rest `h x h`) plus the extra diffusion depth `k` applied to view 2.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    w: Vec<DMatrix<f64>>,
    k: usize,
}

impl EncoderWeights {
    /// Validates the dimension chain: each layer's row count must equal the
    /// previous layer's column count.
    pub fn from_matrices(w: Vec<DMatrix<f64>>, k: usize) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        for l in 1..w.len() {
            if w[l].nrows() != w[l - 1].ncols() {
                return Err(Error::ShapeMismatch {
                    expected: format!("layer {l} with {} rows", w[l - 1].ncols()),
                    got: format!("{}x{}", w[l].nrows(), w[l].ncols()),
                });
            }
        }
        Ok(EncoderWeights { w, k })
    }

    /// Fan-scaled uniform initialization: layer entries drawn from
    /// `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`, filled
    /// column-major layer by layer so a fixed seed fixes the weights.
    pub fn init<R: Rng>(d: usize, hidden: usize, layers: usize, k: usize, rng: &mut R) -> Result<Self> {
        if layers == 0 {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        if d == 0 || hidden == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        let mut w = Vec::with_capacity(layers);
        for l in 0..layers {
            let rows = if l == 0 { d } else { hidden };
            let a = (6.0 / (rows + hidden) as f64).sqrt();
            let mut m = DMatrix::zeros(rows, hidden);
            for c in 0..hidden {
                for r in 0..rows {
                    m[(r, c)] = (2.0 * rng.gen::<f64>() - 1.0) * a;
                }
            }
            w.push(m);
        }
        Ok(EncoderWeights { w, k })
    }

    pub fn layer_count(&self) -> usize {
        self.w.len()
    }

    pub fn extra_diffusion(&self) -> usize {
        self.k
    }

    /// Copy with a different extra diffusion depth (the symmetric-encoder
    /// ablation forces 0).
    pub fn with_extra_diffusion(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.w
    }

    pub fn matrices_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.w
    }

    pub fn input_dim(&self) -> usize {
        self.w[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w[self.w.len() - 1].ncols()
    }

    /// Activation of layer `l` (0-indexed): rectifier except the last.
    pub fn activation(&self, l: usize) -> Activation {
        if l + 1 == self.w.len() {
            Activation::Identity
        } else {
            Activation::Rectifier
        }
    }
}

/// The graph filter `S = D~^{-1/2} (A + I) D~^{-1/2}`. With self-loops the
/// degree is always at least 1, every isolated node maps to a unit basis
/// row, and the spectral radius stays at most 1. The raw variant omits the
/// self-loops and zeroes rows of isolated nodes instead.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionMatrix {
    s: DMatrix<f64>,
}

impl DiffusionMatrix {
    pub fn from_graph(g: &Graph, raw: bool) -> Self {
        let n = g.n();
        let a = g.adjacency();
        let with_loops =
            DMatrix::from_fn(n, n, |i, j| if i == j && !raw { 1.0 } else { a[(i, j)] });
        let scale = nalgebra::DVector::from_fn(n, |i, _| {
            let d = with_loops.row(i).sum();
            if d > DEGREE_TOL {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        });
        let s = DMatrix::from_fn(n, n, |i, j| scale[i] * scale[j] * with_loops[(i, j)]);
        DiffusionMatrix { s }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn n(&self) -> usize {
        self.s.nrows()
    }
}

/// One diffusion application: `S H`.
pub fn diffusion(s: &DiffusionMatrix, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if h.nrows() != s.n() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} signal rows", s.n()),
            got: format!("{}", h.nrows()),
        });
    }
    Ok(&s.s * h)
}

/// One transformation application: `act(H W)`.
pub fn transform(w: &DMatrix<f64>, h: &DMatrix<f64>, activation: Activation) -> Result<DMatrix<f64>> {
    if h.ncols() != w.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} signal columns", w.nrows()),
            got: format!("{}", h.ncols()),
        });
    }
    let mut z = h * w;
    if activation == Activation::Rectifier {
        z.apply(|v| *v = v.max(0.0));
    }
    Ok(z)
}

/// The two per-view embedding matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewEmbeddings {
    pub h1: DMatrix<f64>,
    pub h2: DMatrix<f64>,
}

/// Intermediates retained by one view's forward pass: post-diffusion inputs
/// `B_l = S A_{l-1}` and pre-activations `Z_l = B_l W_l` per layer.
#[derive(Debug, Clone)]
struct ViewTape {
    b: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
}

/// Everything [`backward_pair`] needs: both diffusion matrices and both view
/// tapes, plus the extra diffusion depth applied to view 2.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    s1: DiffusionMatrix,
    s2: DiffusionMatrix,
    view1: ViewTape,
    view2: ViewTape,
    k: usize,
}

impl ForwardTape {
    /// Smallest absolute pre-activation over all rectified layers of both
    /// views; infinity when no hidden layer exists. Derivative checks use
    /// this to stay away from the rectifier kink.
    pub fn min_hidden_preactivation(&self, weights: &EncoderWeights) -> f64 {
        let mut min = f64::INFINITY;
        for tape in [&self.view1, &self.view2] {
            for l in 0..tape.z.len() {
                if weights.activation(l) == Activation::Rectifier {
                    for v in tape.z[l].iter() {
                        min = min.min(v.abs());
                    }
                }
            }
        }
        min
    }
}

fn forward_view(
    s: &DiffusionMatrix,
    x: &DMatrix<f64>,
    weights: &EncoderWeights,
) -> Result<(DMatrix<f64>, ViewTape)> {
    let mut h = x.clone();
    let mut tape = ViewTape { b: Vec::new(), z: Vec::new() };
    for l in 0..weights.layer_count() {
        let b = diffusion(s, &h)?;
        let w = &weights.matrices()[l];
        if b.ncols() != w.nrows() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} columns into layer {l}", w.nrows()),
                got: format!("{}", b.ncols()),
            });
        }
        let z = &b * w;
        h = z.clone();
        if weights.activation(l) == Activation::Rectifier {
            h.apply(|v| *v = v.max(0.0));
        }
        tape.b.push(b);
        tape.z.push(z);
    }
    Ok((h, tape))
}

/// Runs both encoders: view 1 over `g1` with the shared stack, view 2 over
/// `g2` with the same stack followed by `k` extra diffusions. The graphs
/// must carry the same feature matrix (two augmentations of one graph).
/// Returns the embeddings and the tape for [`backward_pair`].
pub fn forward_pair(
    g1: &Graph,
    g2: &Graph,
    weights: &EncoderWeights,
    raw_diffusion: bool,
) -> Result<(ViewEmbeddings, ForwardTape)> {
    if g1.n() != g2.n() || g1.features().shape() != g2.features().shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("paired views over {} nodes", g1.n()),
            got: format!("{} vs {} nodes", g1.n(), g2.n()),
        });
    }
    debug_assert_eq!(g1.features(), g2.features(), "views must share the feature matrix");
    let s1 = DiffusionMatrix::from_graph(g1, raw_diffusion);
    let s2 = DiffusionMatrix::from_graph(g2, raw_diffusion);
    let (h1, view1) = forward_view(&s1, g1.features(), weights)?;
    let (mut h2, view2) = forward_view(&s2, g1.features(), weights)?;
    for _ in 0..weights.extra_diffusion() {
        h2 = diffusion(&s2, &h2)?;
    }
    let tape = ForwardTape { s1, s2, view1, view2, k: weights.extra_diffusion() };
    Ok((ViewEmbeddings { h1, h2 }, tape))
}

fn backward_view(
    s: &DiffusionMatrix,
    tape: &ViewTape,
    weights: &EncoderWeights,
    dh: &DMatrix<f64>,
    extra_diffusions: usize,
    dw: &mut [DMatrix<f64>],
) {
    let mut da = dh.clone();
    // S is symmetric, so the adjoint of each extra diffusion is S itself.
    for _ in 0..extra_diffusions {
        da = &s.s * da;
    }
    for l in (0..weights.layer_count()).rev() {
        let dz = match weights.activation(l) {
            Activation::Identity => da.clone(),
            // Subgradient 0 at the kink: strictly positive pre-activations pass.
            Activation::Rectifier => {
                DMatrix::from_fn(da.nrows(), da.ncols(), |r, c| {
                    if tape.z[l][(r, c)] > 0.0 {
                        da[(r, c)]
                    } else {
                        0.0
                    }
                })
            }
        };
        dw[l] += tape.b[l].transpose() * &dz;
        if l > 0 {
            let db = &dz * weights.matrices()[l].transpose();
            da = &s.s * db;
        }
    }
}

/// Reverse-mode gradients of `<dh1, H1> + <dh2, H2>` with respect to every
/// shared weight matrix, accumulating both views' contributions.
pub fn backward_pair(
    tape: &ForwardTape,
    weights: &EncoderWeights,
    dh1: &DMatrix<f64>,
    dh2: &DMatrix<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    let last = weights.layer_count() - 1;
    let expect = (tape.view1.z[last].nrows(), weights.output_dim());
    for (name, dh) in [("dh1", dh1), ("dh2", dh2)] {
        if dh.shape() != expect {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} {name}", expect.0, expect.1),
                got: format!("{}x{}", dh.nrows(), dh.ncols()),
            });
        }
    }
    let mut dw: Vec<DMatrix<f64>> =
        weights.matrices().iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect();
    backward_view(&tape.s1, &tape.view1, weights, dh1, 0, &mut dw);
    backward_view(&tape.s2, &tape.view2, weights, dh2, tape.k, &mut dw);
    Ok(dw)
}

/// Canonical single-graph embedding: the view-1 composition (no extra
/// diffusions) over the graph as given. Downstream tasks evaluate this.
pub fn embed(g: &Graph, weights: &EncoderWeights, raw_diffusion: bool) -> Result<DMatrix<f64>> {
    let s = DiffusionMatrix::from_graph(g, raw_diffusion);
    let (h, _) = forward_view(&s, g.features(), weights)?;
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_node_edge(features: DMatrix<f64>) -> Graph {
        build_graph(2, &[(0, 1)], features, None).unwrap()
    }

    #[test]
    fn diffusion_edgeless_is_identity() {
        let g = build_graph(3, &[], DMatrix::from_fn(3, 2, |i, j| (i + j) as f64), None).unwrap();
        let s = DiffusionMatrix::from_graph(&g, false);
        assert_eq!(s.matrix(), &DMatrix::identity(3, 3));
        let h = g.features().clone();
        assert_eq!(diffusion(&s, &h).unwrap(), h);
    }

    #[test]
    fn diffusion_two_node_edge_averages() {
        let g = two_node_edge(DMatrix::from_row_slice(2, 1, &[2.0, 4.0]));
        let s = DiffusionMatrix::from_graph(&g, false);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(s.matrix()[(i, j)], 0.5, epsilon = 1e-15);
            }
        }
        let out = diffusion(&s, g.features()).unwrap();
        assert_abs_diff_eq!(out[(0, 0)], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[(1, 0)], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn diffusion_of_zero_is_zero() {
        let g = two_node_edge(DMatrix::zeros(2, 2));
        let s = DiffusionMatrix::from_graph(&g, false);
        assert_eq!(diffusion(&s, &DMatrix::zeros(2, 3)).unwrap(), DMatrix::zeros(2, 3));
    }

    #[test]
    fn raw_diffusion_zeroes_isolated_rows() {
        let g = build_graph(3, &[(0, 1)], DMatrix::zeros(3, 1), None).unwrap();
        let s = DiffusionMatrix::from_graph(&g, true);
        for j in 0..3 {
            assert_eq!(s.matrix()[(2, j)], 0.0);
        }
        assert_abs_diff_eq!(s.matrix()[(0, 1)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn transform_examples() {
        let h = DMatrix::from_row_slice(1, 2, &[3.0, 5.0]);
        let id = DMatrix::identity(2, 2);
        assert_eq!(transform(&id, &h, Activation::Rectifier).unwrap(), h);

        let hw = DMatrix::from_row_slice(1, 2, &[-1.0, 2.0]);
        let out = transform(&id, &hw, Activation::Rectifier).unwrap();
        assert_eq!(out, DMatrix::from_row_slice(1, 2, &[0.0, 2.0]));
        let out = transform(&id, &hw, Activation::Identity).unwrap();
        assert_eq!(out, hw);
    }

    #[test]
    fn forward_same_view_k0_is_bitwise_equal() {
        let g = two_node_edge(DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = EncoderWeights::init(2, 3, 2, 0, &mut rng).unwrap();
        let (emb, _) = forward_pair(&g, &g, &w, false).unwrap();
        assert_eq!(emb.h1, emb.h2);
    }

    #[test]
    fn forward_extra_diffusion_on_edgeless_is_identity() {
        let g1 = two_node_edge(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let g2 = build_graph(2, &[], g1.features().clone(), None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w0 = EncoderWeights::init(2, 3, 2, 0, &mut rng).unwrap();
        let w2 = w0.clone().with_extra_diffusion(2);
        let (e0, _) = forward_pair(&g1, &g2, &w0, false).unwrap();
        let (e2, _) = forward_pair(&g1, &g2, &w2, false).unwrap();
        assert_eq!(e0.h2, e2.h2);
    }

    #[test]
    fn forward_asymmetry_with_edges() {
        let g = two_node_edge(DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = EncoderWeights::init(2, 3, 2, 1, &mut rng).unwrap();
        let (emb, _) = forward_pair(&g, &g, &w, false).unwrap();
        assert_ne!(emb.h1, emb.h2);
    }

    #[test]
    fn forward_single_linear_layer_matches_hand_chain() {
        // i = 1 means the only transformation is the identity head, so
        // H2 = S^{1+k} X W exactly.
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        let g = two_node_edge(x.clone());
        let w_mat = DMatrix::from_row_slice(2, 2, &[0.3, -0.7, 1.1, 0.2]);
        let w = EncoderWeights::from_matrices(vec![w_mat.clone()], 2).unwrap();
        let (emb, _) = forward_pair(&g, &g, &w, false).unwrap();
        let s = DiffusionMatrix::from_graph(&g, false).matrix().clone();
        let want1 = &s * &x * &w_mat;
        let want2 = &s * &s * &s * &x * &w_mat;
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(emb.h1[(i, j)], want1[(i, j)], epsilon = 1e-12);
                assert_abs_diff_eq!(emb.h2[(i, j)], want2[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn backward_zero_cotangents_give_zero_grads() {
        let g = two_node_edge(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = EncoderWeights::init(2, 3, 2, 2, &mut rng).unwrap();
        let (_, tape) = forward_pair(&g, &g, &w, false).unwrap();
        let zero = DMatrix::zeros(2, 3);
        let dw = backward_pair(&tape, &w, &zero, &zero).unwrap();
        for m in dw {
            assert_eq!(m, DMatrix::zeros(m.nrows(), m.ncols()));
        }
    }

    #[test]
    fn backward_linear_case_matches_hand_derivation() {
        // i = 1, identity head: dW = X^T S1^T dH1 + X^T (S2^{1+k})^T dH2.
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        let g1 = two_node_edge(x.clone());
        let g2 = build_graph(2, &[], x.clone(), None).unwrap();
        let w_mat = DMatrix::from_row_slice(2, 2, &[0.3, -0.7, 1.1, 0.2]);
        let w = EncoderWeights::from_matrices(vec![w_mat], 1).unwrap();
        let (_, tape) = forward_pair(&g1, &g2, &w, false).unwrap();
        let dh1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let dh2 = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 1.0, 0.0]);
        let dw = backward_pair(&tape, &w, &dh1, &dh2).unwrap();

        let s1 = DiffusionMatrix::from_graph(&g1, false).matrix().clone();
        let s2 = DiffusionMatrix::from_graph(&g2, false).matrix().clone();
        let s2_pow = &s2 * &s2; // 1 + k with k = 1
        let want = x.transpose() * s1.transpose() * &dh1 + x.transpose() * s2_pow.transpose() * &dh2;
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(dw[0][(i, j)], want[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn diffusion_contracts_frobenius_norm() {
        let g = build_graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)], DMatrix::zeros(4, 1), None)
            .unwrap();
        let s = DiffusionMatrix::from_graph(&g, false);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = DMatrix::from_fn(4, 3, |_, _| 2.0 * rng.gen::<f64>() - 1.0);
        let out = diffusion(&s, &h).unwrap();
        assert!(out.norm() <= (1.0 + 1e-9) * h.norm());
        let radius = s.matrix().symmetric_eigenvalues().amax();
        assert!(radius <= 1.0 + 1e-9);
    }

    #[test]
    fn init_is_deterministic_and_chained() {
        let a = EncoderWeights::init(5, 4, 3, 2, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let b = EncoderWeights::init(5, 4, 3, 2, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.matrices()[0].shape(), (5, 4));
        assert_eq!(a.matrices()[1].shape(), (4, 4));
        assert_eq!(a.output_dim(), 4);
        assert!(EncoderWeights::from_matrices(
            vec![DMatrix::zeros(3, 4), DMatrix::zeros(3, 4)],
            0
        )
        .is_err());
    }
}
