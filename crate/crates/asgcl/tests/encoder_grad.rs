//! Finite-difference validation of the encoder's hand-written backward pass.
//!
//! The probe functional is `phi(W) = <dh1, H1(W)> + <dh2, H2(W)>` for fixed
//! random cotangents, so `d phi / d W_l` must equal the matrices returned by
//! [`asgcl::encoder::backward_pair`]. Central differences on every weight
//! entry pin the whole chain: shared weights, per-view diffusion, rectifier
//! masks and the extra diffusions of view 2.

mod common;

use asgcl::encoder::{backward_pair, forward_pair, EncoderWeights};
use asgcl::graph::Graph;
use common::er_graph;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-3;
/// Pre-activations this close to the rectifier kink make one-sided FD
/// unreliable; such seeds are skipped (the fixed seed list below keeps
/// several valid cases).
const KINK_GUARD: f64 = 1e-3;

fn phi(
    g1: &Graph,
    g2: &Graph,
    weights: &EncoderWeights,
    dh1: &DMatrix<f64>,
    dh2: &DMatrix<f64>,
) -> f64 {
    let (emb, _) = forward_pair(g1, g2, weights, false).unwrap();
    emb.h1.dot(dh1) + emb.h2.dot(dh2)
}

fn check_backward_on_seed(seed: u64, layers: usize, k: usize) -> bool {
    let n = 8;
    let g1 = er_graph(n, 4, 0.4, seed);
    let g2 = er_graph(n, 4, 0.5, seed + 1000).with_features(g1.features().clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
    let weights = EncoderWeights::init(4, 3, layers, k, &mut rng).unwrap();
    let (_, tape) = forward_pair(&g1, &g2, &weights, false).unwrap();
    if tape.min_hidden_preactivation(&weights) < KINK_GUARD {
        return false;
    }
    let dh1 = DMatrix::from_fn(n, 3, |_, _| 2.0 * rng.gen::<f64>() - 1.0);
    let dh2 = DMatrix::from_fn(n, 3, |_, _| 2.0 * rng.gen::<f64>() - 1.0);
    let dw = backward_pair(&tape, &weights, &dh1, &dh2).unwrap();

    let mut checked = 0usize;
    for l in 0..layers {
        for r in 0..weights.matrices()[l].nrows() {
            for c in 0..weights.matrices()[l].ncols() {
                let mut plus = weights.clone();
                plus.matrices_mut()[l][(r, c)] += FD_STEP;
                let mut minus = weights.clone();
                minus.matrices_mut()[l][(r, c)] -= FD_STEP;
                let fd = (phi(&g1, &g2, &plus, &dh1, &dh2)
                    - phi(&g1, &g2, &minus, &dh1, &dh2))
                    / (2.0 * FD_STEP);
                let analytic = dw[l][(r, c)];
                if analytic.abs() > 1e-6 || fd.abs() > 1e-6 {
                    let rel = (fd - analytic).abs() / analytic.abs().max(fd.abs());
                    assert!(
                        rel <= REL_TOL,
                        "seed {seed} layer {l} ({r},{c}): fd {fd:e} vs analytic {analytic:e}"
                    );
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 10, "seed {seed}: only {checked} entries were significant");
    true
}

#[test]
fn backward_matches_finite_differences_two_layers() {
    let mut valid = 0;
    for seed in [21u64, 22, 23, 24, 25] {
        if check_backward_on_seed(seed, 2, 2) {
            valid += 1;
        }
    }
    assert!(valid >= 3, "only {valid} seeds cleared the kink guard");
}

#[test]
fn backward_matches_finite_differences_three_layers_k1() {
    let mut valid = 0;
    for seed in [31u64, 32, 33, 34, 35] {
        if check_backward_on_seed(seed, 3, 1) {
            valid += 1;
        }
    }
    assert!(valid >= 3, "only {valid} seeds cleared the kink guard");
}

#[test]
fn backward_matches_finite_differences_symmetric_k0() {
    let mut valid = 0;
    for seed in [41u64, 42, 43, 44, 45] {
        if check_backward_on_seed(seed, 2, 0) {
            valid += 1;
        }
    }
    assert!(valid >= 3, "only {valid} seeds cleared the kink guard");
}

#[test]
fn shared_weights_receive_both_views_contributions() {
    // Zeroing one cotangent must change the gradient of every layer, which
    // fails if either view were detached from the shared stack.
    let n = 8;
    let g1 = er_graph(n, 4, 0.4, 60);
    let g2 = er_graph(n, 4, 0.5, 61).with_features(g1.features().clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let weights = EncoderWeights::init(4, 3, 2, 2, &mut rng).unwrap();
    let (_, tape) = forward_pair(&g1, &g2, &weights, false).unwrap();
    let dh = DMatrix::from_fn(n, 3, |_, _| 2.0 * rng.gen::<f64>() - 1.0);
    let zero = DMatrix::zeros(n, 3);

    let both = backward_pair(&tape, &weights, &dh, &dh).unwrap();
    let only1 = backward_pair(&tape, &weights, &dh, &zero).unwrap();
    let only2 = backward_pair(&tape, &weights, &zero, &dh).unwrap();
    for l in 0..2 {
        let sum = &only1[l] + &only2[l];
        assert!((&both[l] - &sum).amax() <= 1e-12, "layer {l}: views do not add");
        assert!(only1[l].amax() > 0.0, "layer {l}: view 1 contributes nothing");
        assert!(only2[l].amax() > 0.0, "layer {l}: view 2 contributes nothing");
    }
}

#[test]
fn extra_diffusion_depth_separates_views() {
    let g = er_graph(10, 4, 0.4, 70);
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let w0 = EncoderWeights::init(4, 3, 2, 0, &mut rng).unwrap();
    let (e0, _) = forward_pair(&g, &g, &w0, false).unwrap();
    assert_eq!(e0.h1, e0.h2, "k = 0 over identical graphs must coincide");

    for k in 1..=3 {
        let wk = w0.clone().with_extra_diffusion(k);
        let (ek, _) = forward_pair(&g, &g, &wk, false).unwrap();
        assert_eq!(ek.h1, e0.h1, "view 1 must not depend on k");
        let gap = (&ek.h2 - &ek.h1).amax();
        assert!(gap > 1e-9, "k = {k} left the views identical");
    }
}
