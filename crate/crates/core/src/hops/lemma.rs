//! Exact check that the raw hop stack scales the sensitive column by q^k.
//!
//! The reference values are computed by integer group sums, in i128 while
//! they fit and in arbitrary precision afterwards, independently of the
//! floating-point path.

use num_bigint::BigInt;

use super::{hop_aggregate, HopNorm, SensitiveGroupGraph};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arithmetic {
    I128,
    BigInt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaTwoRow {
    pub k: usize,
    pub arithmetic: Arithmetic,
    /// Integer hop k equals q^k·h entrywise.
    pub exact: bool,
    /// The f64 hop stack equals the integer result; `None` once values
    /// exceed 2^53 and f64 can no longer hold them exactly.
    pub float_exact: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaTwoReport {
    pub q: usize,
    pub rows: Vec<LemmaTwoRow>,
}

impl LemmaTwoReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.exact && r.float_exact != Some(false))
    }
}

enum Column {
    Small(Vec<i128>),
    Big(Vec<BigInt>),
}

fn group_sums_i128(sg: &SensitiveGroupGraph, x: &[i128]) -> Option<Vec<i128>> {
    let mut sums = [0i128; 2];
    for (v, &g) in x.iter().zip(&sg.group_of) {
        sums[g as usize] = sums[g as usize].checked_add(*v)?;
    }
    Some(sg.group_of.iter().map(|&g| sums[g as usize]).collect())
}

fn group_sums_big(sg: &SensitiveGroupGraph, x: &[BigInt]) -> Vec<BigInt> {
    let mut sums = [BigInt::from(0), BigInt::from(0)];
    for (v, &g) in x.iter().zip(&sg.group_of) {
        sums[g as usize] += v;
    }
    sg.group_of.iter().map(|&g| sums[g as usize].clone()).collect()
}

/// `features[:, sensitive_index]` must hold integers.
pub fn verify_lemma2(
    sg: &SensitiveGroupGraph,
    features: &Matrix,
    sensitive_index: usize,
    k_max: usize,
) -> Result<LemmaTwoReport> {
    if features.rows() != sg.n() || sensitive_index >= features.cols() {
        return Err(Error::Shape("features do not match the group graph".into()));
    }
    let h_f = features.column(sensitive_index);
    if h_f.iter().any(|v| v.fract() != 0.0 || v.abs() > 2f64.powi(53)) {
        return Err(Error::Precondition("sensitive column is not integer valued".into()));
    }
    let h: Vec<i128> = h_f.iter().map(|&v| v as i128).collect();
    let q = sg.q();
    let stack = hop_aggregate(sg, features, k_max, HopNorm::Raw)?;

    let mut col = Column::Small(h.clone());
    let mut rows = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        col = match col {
            Column::Small(x) => match group_sums_i128(sg, &x) {
                Some(next) => Column::Small(next),
                None => {
                    let big: Vec<BigInt> = x.into_iter().map(BigInt::from).collect();
                    Column::Big(group_sums_big(sg, &big))
                }
            },
            Column::Big(x) => Column::Big(group_sums_big(sg, &x)),
        };
        let qk = BigInt::from(q).pow(k as u32);
        let float_col = stack.slice(k).column(sensitive_index);
        let (arithmetic, exact, float_exact) = match &col {
            Column::Small(x) => {
                let qk_small = i128::try_from(&qk).ok();
                let exact = x.iter().zip(&h).all(|(v, hv)| {
                    qk_small
                        .and_then(|m| m.checked_mul(*hv))
                        .map_or_else(|| BigInt::from(*v) == &qk * hv, |want| *v == want)
                });
                let representable = x.iter().all(|v| v.unsigned_abs() <= 1u128 << 53);
                let float_exact = representable
                    .then(|| x.iter().zip(&float_col).all(|(v, f)| *v as f64 == *f));
                (Arithmetic::I128, exact, float_exact)
            }
            Column::Big(x) => {
                let exact = x.iter().zip(&h).all(|(v, hv)| *v == &qk * hv);
                (Arithmetic::BigInt, exact, None)
            }
        };
        rows.push(LemmaTwoRow {
            k,
            arithmetic,
            exact,
            float_exact,
        });
    }
    Ok(LemmaTwoReport { q, rows })
}
