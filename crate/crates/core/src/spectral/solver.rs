//! Restarted block Krylov eigensolver for symmetric operators that are only
//! available through matrix-vector products.
//!
//! Each cycle builds an orthonormal basis [Y, AY, A²Y, ...] from the current
//! Ritz block Y, solves the small projected eigenproblem, and restarts from
//! the best Ritz vectors. Memory is O(n·m) for a basis of m columns.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub(crate) struct Eigenpairs {
    pub values: Vec<f64>,
    /// n × p, one eigenvector per column.
    pub vectors: Matrix,
    pub residuals: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthogonalizes `v` against `basis` twice and normalizes it; `None` if
/// nothing survives.
fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) -> Option<()> {
    let before = norm(v);
    if before == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            axpy(-c, b, v);
        }
    }
    let after = norm(v);
    if after <= 1e-10 * before {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= after);
    Some(())
}

/// Indices by descending |λ|. Magnitudes that agree to within 1e-9 of the
/// spectral scale count as tied (±λ pairs of bipartite graphs, say) and are
/// ordered by descending λ.
pub(crate) fn magnitude_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    let eps = 1e-9 * values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end - 1]].abs() - values[order[end]].abs() <= eps {
            end += 1;
        }
        order[start..end].sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        start = end;
    }
    order
}

/// Sign convention: the first component with |x| > 1e-8 is positive.
pub(crate) fn canonicalize_sign(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-8) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// `p` eigenpairs of the symmetric operator `apply` (dimension `n`) with
/// largest |λ|, ordered by descending magnitude (larger λ first on ties).
/// `project`, when given, is applied to every basis vector so the search
/// stays inside an invariant subspace.
pub(crate) fn top_magnitude<F, P>(
    n: usize,
    p: usize,
    apply: F,
    project: P,
    tol: f64,
    max_iters: usize,
    seed: u64,
) -> Result<Eigenpairs>
where
    F: Fn(&[f64], &mut [f64]),
    P: Fn(&mut [f64]),
{
    if p == 0 {
        return Ok(Eigenpairs {
            values: Vec::new(),
            vectors: Matrix::zeros(n, 0),
            residuals: Vec::new(),
        });
    }
    if p > n {
        return Err(Error::Precondition(format!("requested {p} eigenpairs of a {n}x{n} operator")));
    }
    let m = n.min((3 * p).max(p + 16));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        project(&mut v);
        v
    };

    let mut block: Vec<Vec<f64>> = (0..p).map(|_| random_vec(&mut rng)).collect();
    let mut worst = f64::INFINITY;
    for _ in 0..max_iters.max(1) {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut images: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut pending = std::mem::take(&mut block);
        let mut stalls = 0;
        while basis.len() < m {
            let mut next = Vec::new();
            for mut v in pending.drain(..) {
                if basis.len() == m {
                    break;
                }
                if orthonormalize(&mut v, &basis).is_none() {
                    continue;
                }
                let mut w = vec![0.0; n];
                apply(&v, &mut w);
                project(&mut w);
                next.push(w.clone());
                basis.push(v);
                images.push(w);
            }
            if next.is_empty() {
                // Krylov space is invariant: continue with fresh directions.
                stalls += 1;
                if stalls > 4 * n + 8 {
                    break;
                }
                next.push(random_vec(&mut rng));
            }
            pending = next;
        }
        let dim = basis.len();
        if dim < p {
            return Err(Error::Precondition(format!(
                "search space has dimension {dim}, fewer than the {p} requested pairs"
            )));
        }
        let mut t = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
                t[(i, j)] = v;
                t[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(t);
        let order = magnitude_order(eig.eigenvalues.as_slice());

        let mut values = Vec::with_capacity(p);
        let mut vectors = Matrix::zeros(n, p);
        let mut residuals = Vec::with_capacity(p);
        let mut ritz = Vec::with_capacity(p);
        worst = 0.0_f64;
        for (col, &idx) in order.iter().take(p).enumerate() {
            let theta = eig.eigenvalues[idx];
            let s = eig.eigenvectors.column(idx);
            let mut y = vec![0.0; n];
            let mut ay = vec![0.0; n];
            for (c, (b, w)) in basis.iter().zip(&images).enumerate() {
                axpy(s[c], b, &mut y);
                axpy(s[c], w, &mut ay);
            }
            let scale = norm(&y);
            y.iter_mut().for_each(|x| *x /= scale);
            ay.iter_mut().for_each(|x| *x /= scale);
            axpy(-theta, &y, &mut ay);
            let res = norm(&ay);
            worst = worst.max(res / theta.abs().max(1.0));
            canonicalize_sign(&mut y);
            for (i, yi) in y.iter().enumerate() {
                vectors.set(i, col, *yi);
            }
            values.push(theta);
            residuals.push(res);
            ritz.push(y);
        }
        if worst <= tol {
            return Ok(Eigenpairs {
                values,
                vectors,
                residuals,
            });
        }
        block = ritz;
    }
    Err(Error::Convergence {
        iterations: max_iters,
        residual: worst,
        tolerance: tol,
    })
}
