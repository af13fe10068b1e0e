//! Seeded synthetic graphs: the planted sensitive-homophily fixture, random
//! connected graphs and matrices for oracle comparisons, and benchmark graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{CsrMatrix, Matrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stochastic block model over the four (sensitive, community) cells.
///
/// Labels are the community, and the community is correlated with the
/// sensitive attribute. Node features carry a weak community signal and a
/// sensitive-attribute leak; column 0 is the sensitive attribute itself.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub n: usize,
    pub seed: u64,
    /// P(community = 1 | s = 1) − P(community = 1 | s = 0).
    pub label_sensitive_gap: f64,
    /// Expected degree towards nodes with the same sensitive value and community.
    pub deg_same_both: f64,
    /// Same sensitive value, other community.
    pub deg_same_s: f64,
    /// Same community, other sensitive value.
    pub deg_same_c: f64,
    /// Neither shared.
    pub deg_diff: f64,
    pub signal_features: usize,
    pub signal_strength: f64,
    pub leak_features: usize,
    pub leak_strength: f64,
    pub noise_features: usize,
    /// Fraction of labels flipped after sampling.
    pub label_noise: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            seed: 0,
            label_sensitive_gap: 0.4,
            deg_same_both: 8.0,
            deg_same_s: 3.0,
            deg_same_c: 2.0,
            deg_diff: 0.5,
            signal_features: 4,
            signal_strength: 0.5,
            leak_features: 4,
            leak_strength: 1.0,
            noise_features: 4,
            label_noise: 0.05,
        }
    }
}

pub fn planted_fairness_graph(cfg: &PlantedConfig) -> Result<Graph> {
    if cfg.n < 8 {
        return Err(Error::Config("planted fixture needs at least 8 nodes".into()));
    }
    if !(0.0..=1.0).contains(&cfg.label_sensitive_gap) {
        return Err(Error::Config("label_sensitive_gap must lie in [0, 1]".into()));
    }
    let mut r = rng(cfg.seed);
    let n = cfg.n;
    let s: Vec<u8> = (0..n).map(|_| r.random_bool(0.5) as u8).collect();
    let c: Vec<u8> = s
        .iter()
        .map(|&si| {
            let p = 0.5 + (if si == 1 { 0.5 } else { -0.5 }) * cfg.label_sensitive_gap;
            r.random_bool(p) as u8
        })
        .collect();

    let mut cell_size = [[0usize; 2]; 2];
    for i in 0..n {
        cell_size[s[i] as usize][c[i] as usize] += 1;
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (same_s, same_c) = (s[i] == s[j], c[i] == c[j]);
            let (deg, ts, tc) = match (same_s, same_c) {
                (true, true) => (cfg.deg_same_both, s[i], c[i]),
                (true, false) => (cfg.deg_same_s, s[i], 1 - c[i]),
                (false, true) => (cfg.deg_same_c, 1 - s[i], c[i]),
                (false, false) => (cfg.deg_diff, 1 - s[i], 1 - c[i]),
            };
            let target = cell_size[ts as usize][tc as usize].max(1) as f64;
            if r.random::<f64>() < (deg / target).min(1.0) {
                edges.push((i, j));
            }
        }
    }
    let adjacency = CsrMatrix::adjacency_from_edges(n, &edges)?;

    let d = 1 + cfg.signal_features + cfg.leak_features + cfg.noise_features;
    let mut h = Matrix::zeros(n, d);
    let mut names = vec!["sensitive".to_string()];
    names.extend((0..cfg.signal_features).map(|j| format!("signal{j}")));
    names.extend((0..cfg.leak_features).map(|j| format!("leak{j}")));
    names.extend((0..cfg.noise_features).map(|j| format!("noise{j}")));
    for i in 0..n {
        let row = h.row_mut(i);
        row[0] = s[i] as f64;
        let mut col = 1;
        let sign = |b: u8| if b == 1 { 1.0 } else { -1.0 };
        for _ in 0..cfg.signal_features {
            let z: f64 = r.sample(StandardNormal);
            row[col] = cfg.signal_strength * sign(c[i]) + z;
            col += 1;
        }
        for _ in 0..cfg.leak_features {
            let z: f64 = r.sample(StandardNormal);
            row[col] = cfg.leak_strength * sign(s[i]) + z;
            col += 1;
        }
        for _ in 0..cfg.noise_features {
            row[col] = r.sample(StandardNormal);
            col += 1;
        }
    }
    let labels = c
        .iter()
        .map(|&ci| Some(if r.random_bool(cfg.label_noise) { 1 - ci } else { ci }))
        .collect();
    Graph::new(adjacency, h, 0, labels)?.with_feature_names(names)
}

/// A random spanning tree plus independent extra edges with probability `p`.
pub fn random_connected_adjacency(n: usize, p: f64, r: &mut impl Rng) -> Result<CsrMatrix> {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((r.random_range(0..v), v));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if r.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    CsrMatrix::adjacency_from_edges(n, &edges)
}

/// Dense symmetric matrix with entries uniform in [−1, 1], stored as CSR.
pub fn random_symmetric(n: usize, r: &mut impl Rng) -> CsrMatrix {
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = r.random_range(-1.0..1.0);
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    CsrMatrix::from_dense(&rows).expect("square by construction")
}

/// Random binary sensitive column with both groups non-empty when n ≥ 2.
pub fn random_sensitive(n: usize, r: &mut impl Rng) -> Vec<u8> {
    let mut s: Vec<u8> = (0..n).map(|_| r.random_bool(0.5) as u8).collect();
    if n >= 2 && s.iter().all(|&v| v == s[0]) {
        s[0] = 1 - s[0];
    }
    s
}

/// Graph with `n` nodes split into `outliers + 1` equal blocks, `d` Gaussian
/// features (column 0 replaced by a binary sensitive value) and labels from a
/// noisy linear rule. Block b has internal expected degree 10 + 4b and there
/// is about one cross-block edge per node, so the leading adjacency
/// eigenvalues sit near the block degrees and stay separated as n grows.
/// Sampling cost is linear in n.
pub fn bench_graph(n: usize, d: usize, outliers: usize, seed: u64) -> Result<Graph> {
    let blocks = outliers + 1;
    if n < 8 * blocks || d < 2 {
        return Err(Error::Config(format!("bench graph needs n >= {} and d >= 2", 8 * blocks)));
    }
    let mut r = rng(seed);
    let size = n / blocks;
    let block_of = |v: usize| (v / size).min(blocks - 1);
    let start = |b: usize| b * size;
    let end = |b: usize| if b + 1 == blocks { n } else { (b + 1) * size };
    let mut edges = Vec::new();
    for v in 1..n {
        // spanning tree keeps the graph connected
        edges.push((r.random_range(0..v), v));
    }
    for b in 0..blocks {
        let (lo, hi) = (start(b), end(b));
        let m = ((hi - lo) as f64 * (10.0 + 4.0 * b as f64) / 2.0).round() as usize;
        for _ in 0..m {
            let (x, y) = (r.random_range(lo..hi), r.random_range(lo..hi));
            if x != y {
                edges.push((x, y));
            }
        }
    }
    for _ in 0..n / 2 {
        let (x, y) = (r.random_range(0..n), r.random_range(0..n));
        if block_of(x) != block_of(y) {
            edges.push((x, y));
        }
    }
    let adjacency = CsrMatrix::adjacency_from_edges(n, &edges)?;
    let mut h = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let row = h.row_mut(i);
        row[0] = r.random_bool(0.5) as u8 as f64;
        for v in row.iter_mut().skip(1) {
            *v = r.sample(StandardNormal);
        }
        let z: f64 = r.sample(StandardNormal);
        labels.push(Some((row[1] + 0.5 * z > 0.0) as u8));
    }
    Graph::new(adjacency, h, 0, labels)
}

/// 40 nodes whose label equals the sign of feature 1; the sensitive
/// attribute is independent of the label.
pub fn linearly_separable(seed: u64) -> Result<Graph> {
    let n = 40;
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((r.random_range(0..v), v));
    }
    let adjacency = CsrMatrix::adjacency_from_edges(n, &edges)?;
    let mut h = Matrix::zeros(n, 3);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = (i % 2) as u8;
        let margin = 1.0 + r.random::<f64>();
        h.set(i, 0, ((i / 2) % 2) as f64);
        h.set(i, 1, if y == 1 { margin } else { -margin });
        h.set(i, 2, r.random_range(-1.0..1.0));
        labels.push(Some(y));
    }
    Graph::new(adjacency, h, 0, labels)
}
