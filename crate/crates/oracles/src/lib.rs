//! Brute-force reference implementations.
//!
//! Everything here is deliberately slow and written against plain `Vec<f64>`
//! rows so that it shares no code with the production crate. Tests and the
//! lemma verification commands use these as ground truth.

pub mod auc;
pub mod dense;
pub mod eig;
pub mod gradient;
pub mod transformer;

pub use auc::pairwise_auc;
pub use dense::{dense_matmul, dense_power_apply, DenseRows};
pub use eig::{dense_eig, DenseEigen};
pub use gradient::fd_gradient;

use std::fmt;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {gap:e}")]
    Asymmetric { row: usize, col: usize, gap: f64 },
    #[error("matrix is not square ({rows} rows, row {row} has {len} entries)")]
    NotSquare { rows: usize, row: usize, len: usize },
    #[error("dense oracle limited to n <= {limit}, got {n}")]
    TooLarge { n: usize, limit: usize },
    #[error("jacobi sweeps did not converge (off-diagonal norm {off:e})")]
    NoConvergence { off: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Where an oracle comparison was run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InstanceDescriptor {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
}

/// Outcome of comparing a production value against an oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub name: String,
    pub max_abs_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub instance: InstanceDescriptor,
}

impl OracleReport {
    /// `pass` is derived, never passed in: pass <=> deviation <= tolerance.
    pub fn new(
        name: impl Into<String>,
        max_abs_deviation: f64,
        tolerance: f64,
        instance: InstanceDescriptor,
    ) -> Self {
        let pass = max_abs_deviation <= tolerance;
        Self {
            name: name.into(),
            max_abs_deviation,
            tolerance,
            pass,
            instance,
        }
    }

    /// Compare two equally sized slices entrywise.
    pub fn compare(
        name: impl Into<String>,
        actual: &[f64],
        expected: &[f64],
        tolerance: f64,
        instance: InstanceDescriptor,
    ) -> Self {
        let dev = if actual.len() != expected.len() {
            f64::INFINITY
        } else {
            actual
                .iter()
                .zip(expected)
                .map(|(a, b)| {
                    if a.is_nan() || b.is_nan() {
                        f64::INFINITY
                    } else {
                        (a - b).abs()
                    }
                })
                .fold(0.0, f64::max)
        };
        Self::new(name, dev, tolerance, instance)
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] n={} k={} seed={} max_dev={:.3e} tol={:.1e}",
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.instance.n,
            self.instance.k,
            self.instance.seed,
            self.max_abs_deviation,
            self.tolerance
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_flag_follows_tolerance() {
        let inst = InstanceDescriptor::default();
        assert!(OracleReport::new("a", 1e-10, 1e-9, inst).pass);
        assert!(!OracleReport::new("a", 1e-8, 1e-9, inst).pass);
        assert!(OracleReport::new("a", 1e-9, 1e-9, inst).pass);
    }

    #[test]
    fn compare_flags_nan_and_length() {
        let inst = InstanceDescriptor::default();
        assert!(!OracleReport::compare("x", &[f64::NAN], &[0.0], 1.0, inst).pass);
        assert!(!OracleReport::compare("x", &[0.0], &[0.0, 1.0], 1.0, inst).pass);
        assert!(OracleReport::compare("x", &[1.0, 2.0], &[1.0, 2.0 + 1e-12], 1e-9, inst).pass);
    }
}
