//! Shared test oracles, all independent of the library's production paths:
//! a Jacobi rotation eigensolver, random graph/matrix generators, and a
//! brute-force assignment search.

#![allow(dead_code)]

use asgcl::augment::{project_delta, FlipProbability};
use asgcl::graph::{build_graph, Graph};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cyclic Jacobi eigenvalue iteration for symmetric matrices, sorted
/// ascending. Deliberately shares nothing with the nalgebra route.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    assert_eq!(m.ncols(), n);
    let mut a = m.clone();
    for _sweep in 0..200 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() < 1e-13 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = tau.signum() / (tau.abs() + (tau * tau + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut vals: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    vals
}

/// Erdos-Renyi graph with edge probability `p` and standard-uniform features.
pub fn er_graph(n: usize, d: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    let features = DMatrix::from_fn(n, d, |_, _| rng.gen::<f64>() - 0.5);
    build_graph(n, &pairs, features, None).unwrap()
}

/// Random feasible flip probabilities: uniform raw entries projected onto
/// the budget.
pub fn random_feasible_delta(n: usize, eps: f64, seed: u64) -> FlipProbability {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>());
    project_delta(&raw, eps).unwrap()
}

/// Random symmetric matrix with entries in (-1, 1).
pub fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = 2.0 * rng.gen::<f64>() - 1.0;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Symmetric matrix with eigenvalues `k + 0.3 * U(0,1)`: every gap is at
/// least 0.4, so first-order eigenvalue perturbation is accurate at tiny t.
pub fn separated_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = asgcl::graph::eigendecompose_sym(&random_symmetric(n, seed ^ 0x5eed))
        .unwrap()
        .eigenvectors()
        .clone();
    let vals = nalgebra::DVector::from_fn(n, |k, _| k as f64 + 0.3 * rng.gen::<f64>());
    &basis * DMatrix::from_diagonal(&vals) * basis.transpose()
}

/// Best assignment score by brute-force permutation search: maximizes the
/// trace of `counts` under a one-to-one mapping of rows to columns.
pub fn brute_force_assignment(counts: &[Vec<usize>]) -> usize {
    let k = counts.len();
    let mut cols: Vec<usize> = (0..k).collect();
    let mut best = 0;
    permute(&mut cols, 0, &mut |perm| {
        let score: usize = (0..k).map(|r| counts[r][perm[r]]).sum();
        if score > best {
            best = score;
        }
    });
    best
}

fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}
