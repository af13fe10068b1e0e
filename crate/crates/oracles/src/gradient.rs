//! Central finite differences.

pub const DEFAULT_STEP: f64 = 1e-5;

pub fn fd_gradient<F>(mut f: F, params: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = params.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let plus = f(&x);
        x[i] = orig - step;
        let minus = f(&x);
        x[i] = orig;
        grad.push((plus - minus) / (2.0 * step));
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let g = fd_gradient(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], DEFAULT_STEP);
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!((g[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn linear_is_exact() {
        let g = fd_gradient(|x| 3.0 * x[0] - 0.5 * x[1], &[7.0, -1.0], DEFAULT_STEP);
        assert!((g[0] - 3.0).abs() < 1e-9);
        assert!((g[1] + 0.5).abs() < 1e-9);
    }
}
