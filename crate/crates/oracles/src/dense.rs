//! Dense matrix products on row vectors.

use crate::OracleError;

pub type DenseRows = Vec<Vec<f64>>;

pub fn dense_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<DenseRows, OracleError> {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; cols]; a.len()];
    for (i, row) in a.iter().enumerate() {
        if row.len() != inner {
            return Err(OracleError::Dimension(format!(
                "left row {i} has {} entries, right has {inner} rows",
                row.len()
            )));
        }
        for j in 0..cols {
            let mut acc = 0.0;
            for p in 0..inner {
                acc += row[p] * b[p][j];
            }
            out[i][j] = acc;
        }
    }
    Ok(out)
}

/// `matrix^k * x` by k explicit dense multiplications.
pub fn dense_power_apply(
    matrix: &[Vec<f64>],
    x: &[Vec<f64>],
    k: usize,
) -> Result<DenseRows, OracleError> {
    let mut cur: DenseRows = x.to_vec();
    for _ in 0..k {
        cur = dense_matmul(matrix, &cur)?;
    }
    Ok(cur)
}

pub fn transpose(a: &[Vec<f64>]) -> DenseRows {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

pub fn identity(n: usize) -> DenseRows {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_zero_is_identity() {
        let m = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let x = vec![vec![3.0], vec![4.0]];
        assert_eq!(dense_power_apply(&m, &x, 0).unwrap(), x);
    }

    #[test]
    fn sensitive_complete_graph_powers() {
        // A_s for s = [1,1,0,0]: ones within groups, self-loops included.
        let a_s = vec![
            vec![1.0, 1.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0, 1.0],
        ];
        let h = vec![vec![1.0], vec![1.0], vec![0.0], vec![0.0]];
        let col = |m: DenseRows| m.into_iter().map(|r| r[0]).collect::<Vec<_>>();
        assert_eq!(col(dense_power_apply(&a_s, &h, 1).unwrap()), [2.0, 2.0, 0.0, 0.0]);
        assert_eq!(col(dense_power_apply(&a_s, &h, 2).unwrap()), [4.0, 4.0, 0.0, 0.0]);
        assert_eq!(col(dense_power_apply(&a_s, &h, 3).unwrap()), [8.0, 8.0, 0.0, 0.0]);
    }

    #[test]
    fn matmul_hand_example() {
        let a = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let b = vec![vec![1.0], vec![1.0]];
        assert_eq!(dense_matmul(&a, &b).unwrap(), vec![vec![3.0], vec![7.0]]);
        assert!(dense_matmul(&a, &[vec![1.0]]).is_err());
    }
}
