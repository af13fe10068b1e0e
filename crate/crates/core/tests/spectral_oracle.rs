mod common;

use common::eig_deviation;
use fairgt::graph::Graph;
use fairgt::linalg::{CsrMatrix, Matrix};
use fairgt::spectral::{
    laplacian_small_eigenpairs, top_magnitude_eigenpairs, top_magnitude_eigenpairs_of, EigenOptions,
};
use fairgt::synthetic::{random_connected_adjacency, random_symmetric, rng};
use fairgt_oracles::dense_eig;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn random_symmetric_matches_dense_oracle() {
    let mut r = rng(2024);
    for case in 0..50 {
        let n = r.random_range(12..=100);
        let t = r.random_range(1..=10);
        let a = random_symmetric(n, &mut r);
        let dev = eig_deviation(&a, t, case);
        assert!(dev <= 1e-6, "case {case} n={n} t={t} deviation {dev:e}");
    }
}

#[test]
fn residual_bound_per_column() {
    let mut r = rng(7);
    let a = random_connected_adjacency(80, 0.08, &mut r).unwrap();
    let opts = EigenOptions::default();
    let b = top_magnitude_eigenpairs_of(&a, 6, &opts).unwrap();
    for i in 0..6 {
        let p = b.vectors.column(i);
        let norm: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-9);
        let mut ap = vec![0.0; 80];
        a.matvec(&p, &mut ap);
        let res: f64 = ap
            .iter()
            .zip(&p)
            .map(|(x, y)| (x - b.eigenvalues[i] * y).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(res <= opts.tol * b.eigenvalues[i].abs().max(1.0));
        if i > 0 {
            assert!(b.eigenvalues[i - 1].abs() >= b.eigenvalues[i].abs());
        }
    }
}

#[test]
fn laplacian_matches_dense_oracle() {
    let mut r = rng(99);
    for _ in 0..10 {
        let n = r.random_range(10..=60);
        let a = random_connected_adjacency(n, 0.1, &mut r).unwrap();
        let g = Graph::new(a.clone(), Matrix::zeros(n, 1), 0, vec![None; n]).unwrap();
        let t = 3;
        let l = laplacian_small_eigenpairs(&g, t, &EigenOptions::default()).unwrap();
        let mut lap = a.to_dense();
        for i in 0..n {
            let deg: f64 = lap[i].iter().sum();
            for j in 0..n {
                lap[i][j] = if i == j { deg } else { -lap[i][j] };
            }
        }
        let mut vals = dense_eig(&lap).unwrap().values;
        vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for i in 0..t {
            assert!((l.eigenvalues[i] - vals[i + 1]).abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjacency_pairs_match_oracle(seed in 0u64..10_000, n in 6usize..60, t in 1usize..5) {
        let mut r = rng(seed);
        let a = random_connected_adjacency(n, 0.15, &mut r).unwrap();
        let g = Graph::new(a.clone(), Matrix::zeros(n, 1), 0, vec![None; n]).unwrap();
        let basis = top_magnitude_eigenpairs(&g, t, &EigenOptions::default()).unwrap();
        let oracle = dense_eig(&a.to_dense()).unwrap();
        for i in 0..t {
            prop_assert!((basis.eigenvalues[i] - oracle.values[i]).abs() <= 1e-6);
        }
    }
}

#[test]
fn bipartite_path_orders_plus_before_minus() {
    let n = 9;
    let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    let a = CsrMatrix::adjacency_from_edges(n, &edges).unwrap();
    let basis = top_magnitude_eigenpairs_of(&a, 4, &EigenOptions::default()).unwrap();
    let lead = 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
    assert!((basis.eigenvalues[0] - lead).abs() < 1e-10);
    assert!((basis.eigenvalues[1] + lead).abs() < 1e-10);
    assert!(eig_deviation(&a, 4, 0) <= 1e-6);
}
