//! Stratified random train/val/test split over labeled nodes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::Graph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train_per_class_cap: usize,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub folds: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_per_class_cap: 50,
            val_fraction: 0.25,
            test_fraction: 0.25,
            seed: 0,
            folds: 5,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let (v, t) = (self.val_fraction, self.test_fraction);
        if !(v > 0.0 && t > 0.0 && v + t < 1.0) {
            return Err(Error::Config(format!(
                "val_fraction + test_fraction must lie in (0, 1), got {v} + {t}"
            )));
        }
        if self.train_per_class_cap == 0 {
            return Err(Error::Config("train_per_class_cap must be positive".into()));
        }
        if self.folds == 0 {
            return Err(Error::Config("folds must be at least 1".into()));
        }
        Ok(())
    }

    /// Seed used for fold `fold`; folds are independent re-splits.
    pub fn fold_seed(&self, fold: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(fold as u64)
    }
}

/// Sorted, pairwise disjoint index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// SHA-256 over the three index lists, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (tag, set) in [(b'r', &self.train), (b'v', &self.val), (b't', &self.test)] {
            h.update([tag]);
            h.update((set.len() as u64).to_le_bytes());
            for &i in set {
                h.update((i as u64).to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per class of size m: `round(m * val_fraction)` validation and
/// `round(m * test_fraction)` test nodes (at least one each), then
/// `min(ceil(m / 2), cap)` training nodes from what remains.
pub fn make_split(g: &Graph, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for class in 0..2u8 {
        let mut members: Vec<usize> = (0..g.n())
            .filter(|&i| g.label_mask()[i] && g.labels()[i] == class)
            .collect();
        let m = members.len();
        let n_val = ((m as f64 * spec.val_fraction).round() as usize).max(1);
        let n_test = ((m as f64 * spec.test_fraction).round() as usize).max(1);
        if m < n_val + n_test + 1 {
            return Err(Error::Split(format!(
                "class {class} has {m} labeled nodes, too few for validation, test and training"
            )));
        }
        let pool = m - n_val - n_test;
        let n_train = m.div_ceil(2).min(spec.train_per_class_cap).min(pool);
        members.shuffle(&mut rng);
        split.val.extend_from_slice(&members[..n_val]);
        split.test.extend_from_slice(&members[n_val..n_val + n_test]);
        split
            .train
            .extend_from_slice(&members[n_val + n_test..n_val + n_test + n_train]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}
