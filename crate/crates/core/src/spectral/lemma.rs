//! Numerical check of the cosine identity between A^k·h and h.
//!
//! With A = Σ λ_i p_i p_iᵀ and α_i = hᵀp_i,
//!
//! ```text
//! cos(A^k h, h) = (α₁² + Σ_{i≥2} α_i² ρ_i^k) / (√(α₁² + Σ_{i≥2} α_i² ρ_i^{2k}) · ‖h‖),  ρ_i = λ_i/λ₁
//! ```
//!
//! which tends to cos(p₁, h) = |α₁|/‖h‖ as k grows. The full spectrum comes
//! from a dense symmetric eigensolver, not from the iterative one.

use nalgebra::{DMatrix, SymmetricEigen};

use super::solver::magnitude_order;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::CsrMatrix;

/// Largest n accepted by the dense verification path.
pub const DENSE_LIMIT: usize = 4000;

struct Spectrum {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

fn full_spectrum(a: &CsrMatrix) -> Result<Spectrum> {
    let n = a.n_rows();
    if n > DENSE_LIMIT {
        return Err(Error::Precondition(format!("dense spectrum limited to n <= {DENSE_LIMIT}, got {n}")));
    }
    let dense = a.to_dense();
    let eig = SymmetricEigen::new(DMatrix::from_fn(n, n, |i, j| dense[i][j]));
    let order = magnitude_order(eig.eigenvalues.as_slice());
    Ok(Spectrum {
        values: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors: order.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaOneRow {
    pub k: usize,
    pub direct: f64,
    pub formula: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaOneReport {
    pub n: usize,
    pub eigenvalues: Vec<f64>,
    /// Coordinates of h in the eigenbasis, same order as `eigenvalues`.
    pub alphas: Vec<f64>,
    pub limit: f64,
    /// |λ₂| / |λ₁|.
    pub ratio: f64,
    pub rows: Vec<LemmaOneRow>,
    /// max_k |direct_k − formula_k|.
    pub identity_deviation: f64,
    /// C = gap₁ / ratio.
    pub c_fit: f64,
    /// gap_k ≤ C·ratio^k (+1e-12) for every k ≥ 2.
    pub decay_fit_holds: bool,
    /// C* = 1.5·(‖h‖² − α₁²) / (|α₁|·‖h‖); gap_k ≤ C*·ratio^k holds for every
    /// k whenever α₁ ≠ 0.
    pub envelope: Option<f64>,
    pub envelope_holds: bool,
}

pub fn verify_lemma1(g: &Graph, k_max: usize) -> Result<LemmaOneReport> {
    let h = g.features().column(g.sensitive_index());
    verify_lemma1_vector(g.adjacency(), &h, k_max)
}

pub fn verify_lemma1_vector(a: &CsrMatrix, h: &[f64], k_max: usize) -> Result<LemmaOneReport> {
    let n = a.n_rows();
    if h.len() != n {
        return Err(Error::Shape(format!("vector of length {} for n = {n}", h.len())));
    }
    let h_norm = h.iter().map(|x| x * x).sum::<f64>().sqrt();
    if h_norm == 0.0 {
        return Err(Error::UndefinedMetric("cosine with a zero sensitive column".into()));
    }
    if n < 2 {
        return Err(Error::Precondition("spectral gap needs at least two eigenvalues".into()));
    }
    let eig = full_spectrum(a)?;
    let (l1, l2) = (eig.values[0], eig.values[1]);
    if l1.abs() - l2.abs() <= 1e-9 * l1.abs().max(1.0) {
        return Err(Error::Precondition(format!(
            "no strict spectral gap: |λ₁| = {:.6}, |λ₂| = {:.6}",
            l1.abs(),
            l2.abs()
        )));
    }
    let alphas: Vec<f64> = eig
        .vectors
        .iter()
        .map(|p| p.iter().zip(h).map(|(x, y)| x * y).sum())
        .collect();
    let a1 = alphas[0];
    let limit = a1.abs() / h_norm;
    let ratio = l2.abs() / l1.abs();
    let sign = l1.signum();

    let mut rows = Vec::with_capacity(k_max);
    let mut x = h.to_vec();
    let mut y = vec![0.0; n];
    for k in 1..=k_max {
        a.matvec(&x, &mut y);
        let scale = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if scale == 0.0 {
            return Err(Error::UndefinedMetric(format!("A^{k}·h vanishes")));
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / scale;
        }
        let direct = x.iter().zip(h).map(|(p, q)| p * q).sum::<f64>() / h_norm;

        let mut num = a1 * a1;
        let mut den = a1 * a1;
        for (lam, al) in eig.values.iter().zip(&alphas).skip(1) {
            let rho = lam / l1;
            num += al * al * rho.powi(k as i32);
            den += al * al * rho.powi(2 * k as i32);
        }
        let formula = sign.powi(k as i32) * num / (den.sqrt() * h_norm);
        rows.push(LemmaOneRow {
            k,
            direct,
            formula,
            gap: (direct - limit).abs(),
        });
    }

    let identity_deviation = rows
        .iter()
        .map(|r| (r.direct - r.formula).abs())
        .fold(0.0, f64::max);
    let c_fit = rows.first().map_or(0.0, |r| r.gap / ratio.max(f64::MIN_POSITIVE));
    let decay_fit_holds = rows
        .iter()
        .skip(1)
        .all(|r| r.gap <= c_fit * ratio.powi(r.k as i32) + 1e-12);
    let envelope = (a1.abs() > 1e-12 * h_norm)
        .then(|| 1.5 * (h_norm * h_norm - a1 * a1).max(0.0) / (a1.abs() * h_norm));
    let envelope_holds = envelope.is_some_and(|c| {
        rows.iter()
            .all(|r| r.gap <= c * ratio.powi(r.k as i32) * (1.0 + 1e-9) + 1e-12)
    });
    Ok(LemmaOneReport {
        n,
        eigenvalues: eig.values,
        alphas,
        limit,
        ratio,
        rows,
        identity_deviation,
        c_fit,
        decay_fit_holds,
        envelope,
        envelope_holds,
    })
}
