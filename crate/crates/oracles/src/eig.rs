//! Cyclic Jacobi eigendecomposition for small symmetric matrices.

use crate::{DenseRows, OracleError};

pub const DENSE_EIG_LIMIT: usize = 500;

/// All eigenpairs, sorted by descending |λ| (ties: larger λ first).
#[derive(Debug, Clone)]
pub struct DenseEigen {
    pub values: Vec<f64>,
    /// `vectors[i]` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<Vec<f64>>,
}

impl DenseEigen {
    pub fn max_residual(&self, a: &[Vec<f64>]) -> f64 {
        let n = a.len();
        let mut worst: f64 = 0.0;
        for (lambda, v) in self.values.iter().zip(&self.vectors) {
            let mut r2 = 0.0;
            for i in 0..n {
                let av: f64 = (0..n).map(|j| a[i][j] * v[j]).sum();
                r2 += (av - lambda * v[i]).powi(2);
            }
            worst = worst.max(r2.sqrt());
        }
        worst
    }
}

pub fn dense_eig(a: &[Vec<f64>]) -> Result<DenseEigen, OracleError> {
    let n = a.len();
    if n > DENSE_EIG_LIMIT {
        return Err(OracleError::TooLarge {
            n,
            limit: DENSE_EIG_LIMIT,
        });
    }
    for (row, r) in a.iter().enumerate() {
        if r.len() != n {
            return Err(OracleError::NotSquare {
                rows: n,
                row,
                len: r.len(),
            });
        }
    }
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0_f64, |m, x| m.max(x.abs()))
        .max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (a[i][j] - a[j][i]).abs();
            if gap > 1e-12 * scale {
                return Err(OracleError::Asymmetric { row: i, col: j, gap });
            }
        }
    }

    let mut m: DenseRows = a.to_vec();
    let mut v: DenseRows = crate::dense::identity(n);
    let frob2: f64 = m.iter().flat_map(|r| r.iter()).map(|x| x * x).sum();

    let off = |m: &DenseRows| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[i][j] * m[i][j];
            }
        }
        s
    };

    let mut converged = n < 2;
    for _sweep in 0..100 {
        let o = off(&m);
        if o <= 1e-32 * frob2 || o == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in m.iter_mut() {
                    let (xp, xq) = (row[p], row[q]);
                    row[p] = c * xp - s * xq;
                    row[q] = s * xp + c * xq;
                }
                for k in 0..n {
                    let (xp, xq) = (m[p][k], m[q][k]);
                    m[p][k] = c * xp - s * xq;
                    m[q][k] = s * xp + c * xq;
                }
                // exact zero for the annihilated pair
                m[p][q] = 0.0;
                m[q][p] = 0.0;
                for row in v.iter_mut() {
                    let (xp, xq) = (row[p], row[q]);
                    row[p] = c * xp - s * xq;
                    row[q] = s * xp + c * xq;
                }
            }
        }
    }
    if !converged {
        let o = off(&m);
        if o > 1e-24 * frob2.max(1e-300) {
            return Err(OracleError::NoConvergence { off: o.sqrt() });
        }
    }

    // descending |λ|; magnitudes equal up to rounding are ordered by λ
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].abs().partial_cmp(&m[i][i].abs()).unwrap());
    let scale = (0..n).fold(1.0f64, |acc, i| acc.max(m[i][i].abs()));
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && m[order[j - 1]][order[j - 1]].abs() - m[order[j]][order[j]].abs() <= 1e-9 * scale {
            j += 1;
        }
        order[i..j].sort_by(|&a, &b| m[b][b].partial_cmp(&m[a][a]).unwrap());
        i = j;
    }
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|r| v[r][i]).collect())
        .collect();
    Ok(DenseEigen { values, vectors })
}
