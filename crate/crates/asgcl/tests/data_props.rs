//! Statistical and format-level checks for dataset generation and loading.

use asgcl::data::{
    generate_sbm, load_dataset, write_edge_list, write_features_csv, write_labels, DatasetSpec,
    FileTriple, SbmParams,
};

/// Mean edge count over many seeds must sit within three standard errors of
/// the closed-form expectation. For n = 300 in three equal blocks:
/// within pairs 3 * C(100, 2) = 14850, between pairs 3 * 100 * 100 = 30000,
/// so E = 14850 * 0.1 + 30000 * 0.01 = 1785 and
/// Var = 14850 * 0.1 * 0.9 + 30000 * 0.01 * 0.99 = 1633.5 per draw.
#[test]
fn sbm_edge_count_matches_expectation() {
    let seeds = 100u64;
    let mut total = 0usize;
    for seed in 0..seeds {
        let g = generate_sbm(&SbmParams {
            n: 300,
            blocks: 3,
            p_in: 0.1,
            p_out: 0.01,
            feature_noise: 0.1,
            seed,
        })
        .unwrap();
        total += g.num_edges();
    }
    let mean = total as f64 / seeds as f64;
    let expected = 1785.0;
    let se_mean = (1633.5f64 / seeds as f64).sqrt();
    assert!(
        (mean - expected).abs() <= 3.0 * se_mean,
        "mean edge count {mean} outside {expected} +- {:.2}",
        3.0 * se_mean
    );
}

/// The three-node path written out and read back is the same graph, and the
/// loader assembles n from the feature file.
#[test]
fn path_graph_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let g = asgcl::graph::build_graph(
        3,
        &[(0, 1), (1, 2)],
        nalgebra::DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
        Some(vec![0, 1, 0]),
    )
    .unwrap();
    let edges = dir.path().join("edges.txt");
    let features = dir.path().join("x.csv");
    let labels = dir.path().join("y.txt");
    write_edge_list(&edges, &g).unwrap();
    write_features_csv(&features, g.features()).unwrap();
    write_labels(&labels, g.labels().unwrap()).unwrap();

    let spec = DatasetSpec {
        name: "p3".into(),
        files: Some(FileTriple { edges, features, labels }),
        sbm: None,
    };
    let loaded = load_dataset(&spec).unwrap();
    assert_eq!(loaded.n(), 3);
    assert_eq!(loaded.num_edges(), 2);
    assert_eq!(loaded.adjacency(), g.adjacency());
    assert_eq!(loaded.features(), g.features());
    assert_eq!(loaded.labels(), g.labels());
}

/// Node counts are reconciled across the triple: labels shorter than the
/// feature matrix or edges pointing past it are data errors.
#[test]
fn mismatched_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("edges.txt");
    let features = dir.path().join("x.csv");
    let labels = dir.path().join("y.txt");
    std::fs::write(&features, "1.0,0.0\n0.0,1.0\n1.0,1.0\n").unwrap();
    std::fs::write(&labels, "0\n1\n").unwrap();
    std::fs::write(&edges, "0 1\n").unwrap();
    let spec = DatasetSpec {
        name: "bad-labels".into(),
        files: Some(FileTriple {
            edges: edges.clone(),
            features: features.clone(),
            labels: labels.clone(),
        }),
        sbm: None,
    };
    assert!(load_dataset(&spec).is_err());

    std::fs::write(&labels, "0\n1\n0\n").unwrap();
    std::fs::write(&edges, "0 5\n").unwrap();
    let spec = DatasetSpec {
        name: "bad-edge".into(),
        files: Some(FileTriple { edges, features, labels }),
        sbm: None,
    };
    assert!(load_dataset(&spec).is_err());
}
