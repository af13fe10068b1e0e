//! Adjacency-spectrum structure encoding: the t eigenpairs of A with largest
//! |λ| (or, for comparison, the t smallest non-trivial Laplacian pairs) and
//! the fused feature matrix H′ = H ∥ B.

mod cache;
mod lemma;
mod solver;

pub use cache::{load_basis, save_basis};
pub use lemma::{verify_lemma1, verify_lemma1_vector, LemmaOneReport, LemmaOneRow};

use std::fmt;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{CsrMatrix, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisSource {
    AdjacencyLargestMagnitude,
    LaplacianSmallestNontrivial,
}

impl BasisSource {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisSource::AdjacencyLargestMagnitude => "adjacency-largest-magnitude",
            BasisSource::LaplacianSmallestNontrivial => "laplacian-smallest-nontrivial",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralWarning {
    /// |λ_t| and |λ_{t+1}| coincide, so the t-th vector is not unique.
    MagnitudeTie { index: usize, gap: f64 },
    /// Fewer non-trivial Laplacian eigenvalues than requested.
    DegenerateSpectrum { components: usize, requested: usize },
}

impl fmt::Display for SpectralWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectralWarning::MagnitudeTie { index, gap } => write!(
                f,
                "magnitude tie at cut index {index} (gap {gap:.3e}); eigenvector choice is seed dependent"
            ),
            SpectralWarning::DegenerateSpectrum {
                components,
                requested,
            } => write!(
                f,
                "graph has {components} connected components, too many for {requested} non-trivial Laplacian eigenpairs"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenOptions {
    /// Residual bound ‖Ap − λp‖ ≤ tol·max(1, |λ|).
    pub tol: f64,
    /// Maximum number of restart cycles.
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    pub eigenvalues: Vec<f64>,
    /// n × t structure matrix B; column i is the unit eigenvector p_i.
    pub vectors: Matrix,
    pub source: BasisSource,
    pub tol: f64,
    pub residuals: Vec<f64>,
    pub warnings: Vec<SpectralWarning>,
}

impl SpectralBasis {
    pub fn empty(n: usize, source: BasisSource) -> Self {
        Self {
            eigenvalues: Vec::new(),
            vectors: Matrix::zeros(n, 0),
            source,
            tol: 0.0,
            residuals: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.vectors.rows()
    }

    pub fn t(&self) -> usize {
        self.eigenvalues.len()
    }
}

fn tie_gap(a: f64, b: f64) -> Option<f64> {
    let gap = a.abs() - b.abs();
    (gap.abs() <= 1e-8 * a.abs().max(1.0)).then_some(gap)
}

pub fn top_magnitude_eigenpairs(g: &Graph, t: usize, opts: &EigenOptions) -> Result<SpectralBasis> {
    top_magnitude_eigenpairs_of(g.adjacency(), t, opts)
}

/// Works for any symmetric sparse matrix, not only 0/1 adjacencies.
pub fn top_magnitude_eigenpairs_of(
    a: &CsrMatrix,
    t: usize,
    opts: &EigenOptions,
) -> Result<SpectralBasis> {
    let n = a.n_rows();
    if a.n_cols() != n || !a.is_symmetric() {
        return Err(Error::Precondition("eigensolver needs a square symmetric matrix".into()));
    }
    if t > n {
        return Err(Error::Precondition(format!("t = {t} exceeds n = {n}")));
    }
    if t == 0 {
        return Ok(SpectralBasis::empty(n, BasisSource::AdjacencyLargestMagnitude));
    }
    let p = (t + 1).min(n);
    let pairs = solver::top_magnitude(
        n,
        p,
        |x, y| a.matvec(x, y),
        |_| {},
        opts.tol,
        opts.max_iters,
        opts.seed,
    )?;
    let mut warnings = Vec::new();
    if p > t {
        if let Some(gap) = tie_gap(pairs.values[t - 1], pairs.values[t]) {
            warnings.push(SpectralWarning::MagnitudeTie { index: t, gap });
        }
    }
    Ok(SpectralBasis {
        eigenvalues: pairs.values[..t].to_vec(),
        vectors: pairs.vectors.columns(0..t),
        source: BasisSource::AdjacencyLargestMagnitude,
        tol: opts.tol,
        residuals: pairs.residuals[..t].to_vec(),
        warnings,
    })
}

/// The t smallest non-zero eigenpairs of L = D − A, found as the largest
/// pairs of σI − L (σ = 2·max degree) with the constant vector projected out.
/// Eigenvalues are returned in ascending order.
pub fn laplacian_small_eigenpairs(g: &Graph, t: usize, opts: &EigenOptions) -> Result<SpectralBasis> {
    let n = g.n();
    if t == 0 {
        return Ok(SpectralBasis::empty(n, BasisSource::LaplacianSmallestNontrivial));
    }
    if t + 1 > n {
        return Err(Error::Precondition(format!(
            "t = {t} non-trivial Laplacian pairs need n > t, got n = {n}"
        )));
    }
    let a = g.adjacency();
    let deg: Vec<f64> = (0..n)
        .map(|i| {
            let (cols, _) = a.row(i);
            cols.iter().filter(|&&j| j != i).count() as f64
        })
        .collect();
    let sigma = 2.0 * deg.iter().cloned().fold(0.0, f64::max);
    let components = g.connected_components();
    let mut warnings = Vec::new();
    if components > t + 1 {
        warnings.push(SpectralWarning::DegenerateSpectrum {
            components,
            requested: t,
        });
    }
    // Self-loops cancel in D − A, so they are skipped in the operator too.
    let apply = |x: &[f64], y: &mut [f64]| {
        for i in 0..n {
            let (cols, _) = a.row(i);
            let mut acc = (sigma - deg[i]) * x[i];
            for &j in cols {
                if j != i {
                    acc += x[j];
                }
            }
            y[i] = acc;
        }
    };
    let deflate = |v: &mut [f64]| {
        let mean = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= mean);
    };
    let zeros = components.saturating_sub(1).min(t);
    let p = (t + zeros + 1).min(n - 1);
    let pairs = solver::top_magnitude(n, p, apply, deflate, opts.tol, opts.max_iters, opts.seed)?;
    let zero_tol = 1e-8 * sigma.max(1.0);
    let lambdas: Vec<f64> = pairs.values.iter().map(|mu| (sigma - mu).max(0.0)).collect();
    let mut chosen: Vec<usize> = (0..p).filter(|&i| lambdas[i] > zero_tol).collect();
    if chosen.len() < t {
        if !warnings.iter().any(|w| matches!(w, SpectralWarning::DegenerateSpectrum { .. })) {
            warnings.push(SpectralWarning::DegenerateSpectrum {
                components,
                requested: t,
            });
        }
        chosen = (0..p).filter(|&i| lambdas[i] <= zero_tol).chain(chosen).collect();
        chosen.sort_unstable();
    }
    let rest: Vec<usize> = chosen.split_off(t.min(chosen.len()));
    if let Some(&next) = rest.first() {
        if let Some(gap) = tie_gap(lambdas[chosen[t - 1]], lambdas[next]) {
            warnings.push(SpectralWarning::MagnitudeTie { index: t, gap });
        }
    }
    let mut vectors = Matrix::zeros(n, t);
    for (c, &i) in chosen.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, c, pairs.vectors.get(r, i));
        }
    }
    Ok(SpectralBasis {
        eigenvalues: chosen.iter().map(|&i| lambdas[i]).collect(),
        vectors,
        source: BasisSource::LaplacianSmallestNontrivial,
        tol: opts.tol,
        residuals: chosen.iter().map(|&i| pairs.residuals[i]).collect(),
        warnings,
    })
}

/// H′ = H ∥ B with H occupying the first d columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeatures {
    pub matrix: Matrix,
    pub d: usize,
    pub t: usize,
    pub sensitive_index: usize,
}

impl FusedFeatures {
    /// H′ = H, used when the structure encoding is switched off.
    pub fn without_structure(g: &Graph) -> Self {
        Self {
            matrix: g.features().clone(),
            d: g.d(),
            t: 0,
            sensitive_index: g.sensitive_index(),
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn width(&self) -> usize {
        self.d + self.t
    }
}

pub fn fuse(g: &Graph, basis: &SpectralBasis) -> Result<FusedFeatures> {
    fuse_with(g, basis, false)
}

/// With `min_max_scale`, each structure column is mapped affinely onto
/// [−1, 1]; constant columns become 0.
pub fn fuse_with(g: &Graph, basis: &SpectralBasis, min_max_scale: bool) -> Result<FusedFeatures> {
    if basis.n() != g.n() {
        return Err(Error::Shape(format!(
            "basis has {} rows but the graph has {} nodes",
            basis.n(),
            g.n()
        )));
    }
    let mut b = basis.vectors.clone();
    if min_max_scale {
        for j in 0..b.cols() {
            let col = b.column(j);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for (i, v) in col.iter().enumerate() {
                let s = if hi > lo { 2.0 * (v - lo) / (hi - lo) - 1.0 } else { 0.0 };
                b.set(i, j, s);
            }
        }
    }
    Ok(FusedFeatures {
        matrix: g.features().hconcat(&b)?,
        d: g.d(),
        t: basis.t(),
        sensitive_index: g.sensitive_index(),
    })
}
