use fairgt::autodiff::{Tape, Tensor};
use fairgt::graph::{binarize_labels, make_split, Graph, SplitSpec};
use fairgt::hops::{hop_aggregate, hop_aggregate_adjacency, verify_lemma2, AdjacencyNorm, HopNorm, SensitiveGroupGraph};
use fairgt::linalg::{CsrMatrix, Matrix};
use fairgt::metrics::{accuracy, auc, statistical_parity};
use fairgt::spectral::{fuse, top_magnitude_eigenpairs, EigenOptions};
use fairgt::synthetic::{planted_fairness_graph, random_connected_adjacency, rng, PlantedConfig};
use fairgt::train::Stat;
use fairgt_oracles::{dense_power_apply, pairwise_auc, DenseRows};
use proptest::prelude::*;
use rand::Rng;

/// Connected random graph with a binary sensitive column 0 holding both
/// values and `d - 1` small-integer feature columns; every node labeled.
fn instance(seed: u64, n: usize, d: usize) -> Graph {
    let mut r = rng(seed);
    let a = random_connected_adjacency(n, 3.0 / n as f64, &mut r).unwrap();
    let mut h = Matrix::zeros(n, d);
    for i in 0..n {
        h.set(i, 0, (i % 2 == 0 || r.random_bool(0.4)) as u8 as f64);
        for j in 1..d {
            h.set(i, j, r.random_range(-5i32..=5) as f64);
        }
    }
    h.set(1, 0, 0.0);
    let labels = (0..n).map(|i| Some((i % 3 == 0) as u8)).collect();
    Graph::new(a, h, 0, labels).unwrap()
}

fn rows(m: &Matrix) -> DenseRows {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn group_dense(sg: &SensitiveGroupGraph, mean: bool) -> DenseRows {
    let n = sg.n();
    (0..n)
        .map(|i| {
            let size = sg.group_sizes[sg.group_of[i] as usize] as f64;
            (0..n).map(|j| sg.entry(i, j) / if mean { size } else { 1.0 }).collect()
        })
        .collect()
}

fn max_dev(a: &DenseRows, b: &DenseRows) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adjacency_is_symmetric(n in 1usize..40, edges in prop::collection::vec((0usize..40, 0usize..40), 0..120)) {
        let edges: Vec<(usize, usize)> = edges.into_iter().map(|(a, b)| (a % n, b % n)).collect();
        let a = CsrMatrix::adjacency_from_edges(n, &edges).unwrap();
        let d = a.to_dense();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(d[i][j], d[j][i]);
            }
        }
    }

    #[test]
    fn binarized_labels_are_zero_or_one(raw in prop::collection::vec(0i64..5, 1..50)) {
        if let Ok(b) = binarize_labels(&raw) {
            prop_assert!(b.iter().all(|&v| v <= 1));
        }
    }

    #[test]
    fn splits_are_deterministic_disjoint_and_balanced(seed in 0u64..1000) {
        let g = instance(seed % 7, 90, 3);
        let spec = SplitSpec { seed, ..Default::default() };
        let s = make_split(&g, &spec).unwrap();
        prop_assert_eq!(&s, &make_split(&g, &spec).unwrap());
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        let total = all.len();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), total);
        prop_assert!(all.iter().all(|&i| g.label_mask()[i]));
        for c in 0..2u8 {
            let count = |v: &[usize]| v.iter().filter(|&&i| g.labels()[i] == c).count() as i64;
            prop_assert!((count(&s.val) - count(&s.test)).abs() <= 1);
        }
    }

    #[test]
    fn fuse_slices_recover_inputs(seed in 0u64..500, n in 8usize..40, t in 0usize..4) {
        let g = instance(seed, n, 3);
        let basis = top_magnitude_eigenpairs(&g, t, &EigenOptions::default()).unwrap();
        let f = fuse(&g, &basis).unwrap();
        prop_assert_eq!(f.matrix.columns(0..3), g.features().clone());
        prop_assert_eq!(f.matrix.columns(3..3 + t), basis.vectors.clone());
    }

    #[test]
    fn group_hops_match_dense_powers(seed in 0u64..10_000, n in 2usize..200, d in 1usize..8, k in 0usize..=4) {
        let g = instance(seed, n.max(4), d + 1);
        let sg = SensitiveGroupGraph::from_sensitive(&g.sensitive()).unwrap();
        let x = rows(g.features());
        let raw = hop_aggregate(&sg, g.features(), k, HopNorm::Raw).unwrap();
        let mean = hop_aggregate(&sg, g.features(), k, HopNorm::GroupMean).unwrap();
        for j in 0..=k {
            // integer inputs keep every raw product exact
            let want = dense_power_apply(&group_dense(&sg, false), &x, j).unwrap();
            prop_assert!(max_dev(&rows(&raw.slice(j)), &want) <= 1e-9);
            let want = dense_power_apply(&group_dense(&sg, true), &x, j).unwrap();
            let scale = want.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
            prop_assert!(max_dev(&rows(&mean.slice(j)), &want) <= 1e-12 * scale);
        }
    }

    #[test]
    fn adjacency_hops_match_dense_powers(seed in 0u64..10_000, n in 4usize..120, k in 0usize..=4) {
        let g = instance(seed, n, 3);
        let x = rows(g.features());
        let a = g.adjacency().to_dense();
        let raw = hop_aggregate_adjacency(&g, g.features(), k, AdjacencyNorm::Raw).unwrap();
        let norm = hop_aggregate_adjacency(&g, g.features(), k, AdjacencyNorm::RowNormalized).unwrap();
        let rn: DenseRows = a.iter().map(|r| {
            let s: f64 = r.iter().sum();
            r.iter().map(|v| v / s).collect()
        }).collect();
        for j in 0..=k {
            prop_assert!(max_dev(&rows(&raw.slice(j)), &dense_power_apply(&a, &x, j).unwrap()) <= 1e-9);
            prop_assert!(max_dev(&rows(&norm.slice(j)), &dense_power_apply(&rn, &x, j).unwrap()) <= 1e-9);
        }
    }

    #[test]
    fn group_mean_keeps_sensitive_column(seed in 0u64..10_000, n in 4usize..200, k in 0usize..=4) {
        let g = instance(seed, n, 3);
        let sg = SensitiveGroupGraph::from_sensitive(&g.sensitive()).unwrap();
        let stack = hop_aggregate(&sg, g.features(), k, HopNorm::GroupMean).unwrap();
        let h = g.features().column(0);
        for j in 0..=k {
            prop_assert_eq!(stack.slice(j).column(0), h.clone());
        }
    }

    #[test]
    fn same_group_nodes_share_hop_tokens(seed in 0u64..10_000, n in 4usize..100, k in 1usize..=4, raw in any::<bool>()) {
        let g = instance(seed, n, 3);
        let sg = SensitiveGroupGraph::from_sensitive(&g.sensitive()).unwrap();
        let norm = if raw { HopNorm::Raw } else { HopNorm::GroupMean };
        let stack = hop_aggregate(&sg, g.features(), k, norm).unwrap();
        let first: Vec<usize> = (0..2u8).map(|s| sg.group_of.iter().position(|&v| v == s).unwrap()).collect();
        for v in 0..n {
            let rep = first[sg.group_of[v] as usize];
            for j in 1..=k {
                prop_assert_eq!(stack.token(v, j), stack.token(rep, j));
            }
        }
    }

    #[test]
    fn lemma_two_exact_in_raw_mode(seed in 0u64..10_000, n in 2usize..200, k in 0usize..=4) {
        let g = instance(seed, n.max(4), 2);
        let sg = SensitiveGroupGraph::from_sensitive(&g.sensitive()).unwrap();
        prop_assert!(verify_lemma2(&sg, g.features(), 0, k).unwrap().pass());
    }

    #[test]
    fn softmax_rows_sum_to_one(vals in prop::collection::vec(-30.0f64..30.0, 12)) {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(&[3, 4], vals).unwrap());
        let s = t.softmax(x).unwrap();
        for row in t.value(s).data().chunks(4) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn parity_symmetries(pred in prop::collection::vec(0u8..2, 20), sens in prop::collection::vec(0u8..2, 20), shift in 0usize..20) {
        prop_assume!(sens.contains(&0) && sens.contains(&1));
        let mask: Vec<usize> = (0..20).collect();
        let p = statistical_parity(&pred, &sens, &mask).unwrap();
        prop_assert_eq!(p.delta_sp, (p.rate_s0 - p.rate_s1).abs());
        prop_assert!((0.0..=1.0).contains(&p.rate_s0) && (0.0..=1.0).contains(&p.rate_s1));
        let flipped: Vec<u8> = sens.iter().map(|s| 1 - s).collect();
        prop_assert_eq!(statistical_parity(&pred, &flipped, &mask).unwrap().delta_sp, p.delta_sp);
        let rot = |v: &[u8]| -> Vec<u8> { (0..20).map(|i| v[(i + shift) % 20]).collect() };
        prop_assert_eq!(statistical_parity(&rot(&pred), &rot(&sens), &mask).unwrap().delta_sp, p.delta_sp);
    }

    #[test]
    fn constant_prediction(c in 0u8..2, labels in prop::collection::vec(0u8..2, 20), sens in prop::collection::vec(0u8..2, 20)) {
        prop_assume!(sens.contains(&0) && sens.contains(&1));
        let mask: Vec<usize> = (0..20).collect();
        let pred = vec![c; 20];
        prop_assert_eq!(statistical_parity(&pred, &sens, &mask).unwrap().delta_sp, 0.0);
        let prior = labels.iter().filter(|&&y| y == c).count() as f64 / 20.0;
        prop_assert!((accuracy(&pred, &labels, &mask).unwrap() - prior).abs() < 1e-15);
    }

    #[test]
    fn auc_matches_pairwise_oracle(scores in prop::collection::vec(-3i32..3, 16), labels in prop::collection::vec(0u8..2, 16)) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let mask: Vec<usize> = (0..16).collect();
        match pairwise_auc(&scores, &labels) {
            Some(want) => prop_assert!((auc(&scores, &labels, &mask).unwrap() - want).abs() < 1e-12),
            None => prop_assert!(auc(&scores, &labels, &mask).is_err()),
        }
    }

    #[test]
    fn stat_mean_within_range(v in prop::collection::vec(0.0f64..1.0, 1..8)) {
        let s = Stat::of(&v);
        prop_assert!(s.min <= s.mean + 1e-15 && s.mean <= s.max + 1e-15);
        prop_assert!(s.std >= 0.0);
    }
}

#[test]
fn different_seeds_give_different_train_sets() {
    let g = planted_fairness_graph(&PlantedConfig { n: 1000, seed: 4, ..Default::default() }).unwrap();
    let a = make_split(&g, &SplitSpec { seed: 1, ..Default::default() }).unwrap();
    let b = make_split(&g, &SplitSpec { seed: 2, ..Default::default() }).unwrap();
    assert_ne!(a.train, b.train);
}
