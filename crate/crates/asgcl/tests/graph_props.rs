//! Eigendecomposition and Laplacian invariants over random graphs.

mod common;

use asgcl::graph::{eigendecompose, sym_norm_laplacian};
use common::er_graph;

#[test]
fn eigendecomposition_roundtrips_on_random_graphs() {
    for seed in 0u64..100 {
        let n = 4 + (seed as usize * 7) % 29; // n in [4, 32]
        let g = er_graph(n, 2, 0.35, seed);
        let l = sym_norm_laplacian(&g);
        let e = eigendecompose(&l).unwrap();

        for k in 1..n {
            assert!(e.eigenvalues()[k] >= e.eigenvalues()[k - 1], "seed {seed}: not sorted");
        }
        assert!(e.eigenvalues()[0] >= -1e-9, "seed {seed}: eigenvalue below 0");
        assert!(e.eigenvalues()[n - 1] <= 2.0 + 1e-9, "seed {seed}: eigenvalue above 2");

        let recon = e.reconstruct();
        let utu = e.eigenvectors().transpose() * e.eigenvectors();
        for i in 0..n {
            for j in 0..n {
                assert!(
                    (recon[(i, j)] - l.matrix()[(i, j)]).abs() <= 1e-8,
                    "seed {seed}: reconstruction off at ({i},{j})"
                );
                let id = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (utu[(i, j)] - id).abs() <= 1e-8,
                    "seed {seed}: eigenvectors not orthonormal at ({i},{j})"
                );
            }
        }
    }
}

#[test]
fn connected_graph_has_zero_eigenvalue() {
    for seed in 200u64..220 {
        // Dense enough that these fixed seeds all come out connected.
        let g = er_graph(12, 2, 0.6, seed);
        if !is_connected(&g) {
            continue;
        }
        let e = eigendecompose(&sym_norm_laplacian(&g)).unwrap();
        assert!(e.eigenvalues()[0].abs() <= 1e-9, "seed {seed}: {}", e.eigenvalues()[0]);
    }
}

fn is_connected(g: &asgcl::graph::Graph) -> bool {
    let n = g.n();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for u in 0..n {
            if g.adjacency()[(v, u)] == 1.0 && !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen.into_iter().all(|s| s)
}
