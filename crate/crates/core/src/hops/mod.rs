//! Sensitive-group hop tokens. A_s links every pair of nodes that share the
//! sensitive value, self-loops included, so (A_s X)[i] is the sum of X over
//! the group of i. A_s is never materialized.

mod lemma;

pub use lemma::{verify_lemma2, Arithmetic, LemmaTwoReport, LemmaTwoRow};

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopNorm {
    /// Slice j is A_s^j H′; magnitudes grow like q^j.
    Raw,
    /// Each application is divided by the group size (row-normalized A_s).
    GroupMean,
}

impl HopNorm {
    pub fn as_str(self) -> &'static str {
        match self {
            HopNorm::Raw => "raw",
            HopNorm::GroupMean => "group-mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(HopNorm::Raw),
            "group-mean" | "group_mean" => Ok(HopNorm::GroupMean),
            _ => Err(Error::Config(format!("unknown hop normalization {s:?} (raw | group-mean)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjacencyNorm {
    Raw,
    /// Divides each row of A by the node degree; isolated nodes aggregate to 0.
    RowNormalized,
}

/// Which operator produced a hop stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopMode {
    Sensitive(HopNorm),
    Adjacency(AdjacencyNorm),
}

impl HopMode {
    fn tag(self) -> u8 {
        match self {
            HopMode::Sensitive(HopNorm::Raw) => 0,
            HopMode::Sensitive(HopNorm::GroupMean) => 1,
            HopMode::Adjacency(AdjacencyNorm::Raw) => 2,
            HopMode::Adjacency(AdjacencyNorm::RowNormalized) => 3,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        Some(match t {
            0 => HopMode::Sensitive(HopNorm::Raw),
            1 => HopMode::Sensitive(HopNorm::GroupMean),
            2 => HopMode::Adjacency(AdjacencyNorm::Raw),
            3 => HopMode::Adjacency(AdjacencyNorm::RowNormalized),
            _ => return None,
        })
    }
}

impl fmt::Display for HopMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HopMode::Sensitive(n) => write!(f, "sensitive/{}", n.as_str()),
            HopMode::Adjacency(AdjacencyNorm::Raw) => write!(f, "adjacency/raw"),
            HopMode::Adjacency(AdjacencyNorm::RowNormalized) => write!(f, "adjacency/row-normalized"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensitiveGroupGraph {
    pub group_of: Vec<u8>,
    /// [m₀, m₁]; m₁ is q.
    pub group_sizes: [usize; 2],
}

impl SensitiveGroupGraph {
    pub fn from_sensitive(s: &[u8]) -> Result<Self> {
        let mut sizes = [0usize; 2];
        for (i, &v) in s.iter().enumerate() {
            if v > 1 {
                return Err(Error::Schema(format!("sensitive value {v} at node {i} is not binary")));
            }
            sizes[v as usize] += 1;
        }
        Ok(Self {
            group_of: s.to_vec(),
            group_sizes: sizes,
        })
    }

    pub fn n(&self) -> usize {
        self.group_of.len()
    }

    pub fn q(&self) -> usize {
        self.group_sizes[1]
    }

    pub fn includes_self(&self) -> bool {
        true
    }

    /// Entry (i, j) of A_s, for oracles and small examples.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        (self.group_of[i] == self.group_of[j]) as u8 as f64
    }
}

pub fn build_group_graph(g: &Graph) -> SensitiveGroupGraph {
    SensitiveGroupGraph::from_sensitive(&g.sensitive()).expect("graph sensitive column is binary")
}

/// Node-major tensor n × (k+1) × width: the tokens of node v are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct HopStack {
    n: usize,
    k: usize,
    width: usize,
    mode: HopMode,
    data: Vec<f64>,
}

impl HopStack {
    fn from_slices(slices: &[Matrix], mode: HopMode) -> Self {
        let (n, width) = (slices[0].rows(), slices[0].cols());
        let k = slices.len() - 1;
        let mut data = Vec::with_capacity(n * (k + 1) * width);
        for v in 0..n {
            for s in slices {
                data.extend_from_slice(s.row(v));
            }
        }
        Self {
            n,
            k,
            width,
            mode,
            data,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mode(&self) -> HopMode {
        self.mode
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn token(&self, v: usize, j: usize) -> &[f64] {
        let off = (v * (self.k + 1) + j) * self.width;
        &self.data[off..off + self.width]
    }

    /// (k+1) × width block for node v, row-major.
    pub fn node_tokens(&self, v: usize) -> &[f64] {
        let len = (self.k + 1) * self.width;
        &self.data[v * len..(v + 1) * len]
    }

    pub fn slice(&self, j: usize) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.width);
        for v in 0..self.n {
            m.row_mut(v).copy_from_slice(self.token(v, j));
        }
        m
    }

    /// Keeps only the nodes in `idx`, in that order.
    pub fn select_nodes(&self, idx: &[usize]) -> HopStack {
        let mut data = Vec::with_capacity(idx.len() * (self.k + 1) * self.width);
        for &v in idx {
            data.extend_from_slice(self.node_tokens(v));
        }
        HopStack {
            n: idx.len(),
            data,
            ..*self
        }
    }

    /// Little-endian layout: magic "FGTH", version u8 (1), mode u8
    /// (0 sensitive/raw, 1 sensitive/group-mean, 2 adjacency/raw,
    /// 3 adjacency/row-normalized), two zero bytes, n u64, k u64, width u64,
    /// then slices 0..=k, each n × width row-major f64.
    pub fn export(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(32 + 8 * self.data.len());
        buf.extend_from_slice(b"FGTH");
        buf.extend_from_slice(&[1, self.mode.tag(), 0, 0]);
        for v in [self.n, self.k, self.width] {
            buf.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for j in 0..=self.k {
            for v in 0..self.n {
                for x in self.token(v, j) {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn import(path: &Path) -> Result<HopStack> {
        let bytes = fs::read(path)?;
        let bad = |w: &str| Error::Format(format!("{}: {w}", path.display()));
        if bytes.len() < 32 || &bytes[..4] != b"FGTH" || bytes[4] != 1 {
            return Err(bad("not a hop stack export"));
        }
        let mode = HopMode::from_tag(bytes[5]).ok_or_else(|| bad("unknown mode"))?;
        let at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()) as usize;
        let (n, k, width) = (at(8), at(16), at(24));
        let vals: Vec<f64> = bytes[32..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if vals.len() != n * (k + 1) * width || (bytes.len() - 32) % 8 != 0 {
            return Err(bad("length does not match header"));
        }
        let slices: Vec<Matrix> = vals
            .chunks(n * width)
            .map(|c| Matrix::new(n, width, c.to_vec()))
            .collect::<Result<_>>()?;
        if n == 0 || width == 0 {
            return Ok(HopStack {
                n,
                k,
                width,
                mode,
                data: Vec::new(),
            });
        }
        Ok(HopStack::from_slices(&slices, mode))
    }
}

/// Slice j = A_s^j·X computed by repeated group sums, O(n·width) per hop.
pub fn hop_aggregate(sg: &SensitiveGroupGraph, x: &Matrix, k: usize, norm: HopNorm) -> Result<HopStack> {
    if x.rows() != sg.n() {
        return Err(Error::Shape(format!(
            "features have {} rows, group graph has {} nodes",
            x.rows(),
            sg.n()
        )));
    }
    let w = x.cols();
    let mut slices = vec![x.clone()];
    for _ in 0..k {
        let prev = slices.last().unwrap();
        let mut sums = [vec![0.0; w], vec![0.0; w]];
        for (i, &g) in sg.group_of.iter().enumerate() {
            for (s, v) in sums[g as usize].iter_mut().zip(prev.row(i)) {
                *s += v;
            }
        }
        if norm == HopNorm::GroupMean {
            for (g, sum) in sums.iter_mut().enumerate() {
                let m = sg.group_sizes[g].max(1) as f64;
                sum.iter_mut().for_each(|s| *s /= m);
            }
        }
        let mut next = Matrix::zeros(sg.n(), w);
        for (i, &g) in sg.group_of.iter().enumerate() {
            next.row_mut(i).copy_from_slice(&sums[g as usize]);
        }
        slices.push(next);
    }
    Ok(HopStack::from_slices(&slices, HopMode::Sensitive(norm)))
}

/// Slice j = A^j·X (or (D⁻¹A)^j·X) by sparse products.
pub fn hop_aggregate_adjacency(g: &Graph, x: &Matrix, k: usize, norm: AdjacencyNorm) -> Result<HopStack> {
    let a = g.adjacency();
    let inv_deg: Vec<f64> = a
        .degrees()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    let mut slices = vec![x.clone()];
    for _ in 0..k {
        let mut next = a.mul_dense(slices.last().unwrap())?;
        if norm == AdjacencyNorm::RowNormalized {
            for (i, s) in inv_deg.iter().enumerate() {
                next.row_mut(i).iter_mut().for_each(|v| *v *= s);
            }
        }
        slices.push(next);
    }
    Ok(HopStack::from_slices(&slices, HopMode::Adjacency(norm)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CsrMatrix;

    #[test]
    fn group_sizes() {
        assert_eq!(SensitiveGroupGraph::from_sensitive(&[1, 1, 0, 0]).unwrap().group_sizes, [2, 2]);
        let sg = SensitiveGroupGraph::from_sensitive(&[0, 0, 0]).unwrap();
        assert_eq!((sg.group_sizes, sg.q()), ([3, 0], 0));
        assert_eq!(SensitiveGroupGraph::from_sensitive(&[1]).unwrap().q(), 1);
    }

    #[test]
    fn raw_sensitive_column_scales_by_q() {
        let sg = SensitiveGroupGraph::from_sensitive(&[1, 1, 0, 0]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 0.5], vec![1.0, 2.0], vec![0.0, 1.0], vec![0.0, 3.0]]).unwrap();
        let st = hop_aggregate(&sg, &x, 3, HopNorm::Raw).unwrap();
        assert_eq!(st.slice(0), x);
        assert_eq!(st.slice(1).column(0), vec![2.0, 2.0, 0.0, 0.0]);
        assert_eq!(st.slice(2).column(0), vec![4.0, 4.0, 0.0, 0.0]);
        assert_eq!(st.slice(3).column(0), vec![8.0, 8.0, 0.0, 0.0]);
        let gm = hop_aggregate(&sg, &x, 3, HopNorm::GroupMean).unwrap();
        for j in 0..=3 {
            assert_eq!(gm.slice(j).column(0), x.column(0));
        }
        assert_eq!(gm.token(0, 2), gm.token(1, 2));
    }

    #[test]
    fn adjacency_path_swaps_neighbours() {
        let adj = CsrMatrix::adjacency_from_edges(2, &[(0, 1)]).unwrap();
        let g = Graph::new(adj, Matrix::zeros(2, 1), 0, vec![None, None]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let st = hop_aggregate_adjacency(&g, &x, 1, AdjacencyNorm::Raw).unwrap();
        assert_eq!(st.slice(1).to_rows(), vec![vec![0.0], vec![1.0]]);
        let st0 = hop_aggregate_adjacency(&g, &x, 0, AdjacencyNorm::Raw).unwrap();
        assert_eq!((st0.k(), st0.slice(0)), (0, x));
    }

    #[test]
    fn export_round_trip() {
        let sg = SensitiveGroupGraph::from_sensitive(&[1, 0, 1]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, -1.0], vec![1.0, 0.25]]).unwrap();
        let st = hop_aggregate(&sg, &x, 2, HopNorm::GroupMean).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hops.bin");
        st.export(&p).unwrap();
        assert_eq!(HopStack::import(&p).unwrap(), st);
    }
}
