//! Statistical parity, accuracy, F1 and AUC over a node mask.

use serde::Serialize;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Parity {
    /// |P(ŷ=1 | s=0) − P(ŷ=1 | s=1)|.
    pub delta_sp: f64,
    pub rate_s0: f64,
    pub rate_s1: f64,
    pub count_s0: usize,
    pub count_s1: usize,
}

pub fn statistical_parity(pred: &[u8], sens: &[u8], mask: &[usize]) -> Result<Parity> {
    let mut pos = [0usize; 2];
    let mut count = [0usize; 2];
    for &i in mask {
        let s = sens[i] as usize;
        if s > 1 {
            return Err(Error::Schema(format!("sensitive value {s} at node {i} is not binary")));
        }
        count[s] += 1;
        pos[s] += (pred[i] == 1) as usize;
    }
    if count[0] == 0 || count[1] == 0 {
        return Err(Error::UndefinedMetric(format!(
            "statistical parity needs both sensitive groups, got {} and {} nodes",
            count[0], count[1]
        )));
    }
    let r0 = pos[0] as f64 / count[0] as f64;
    let r1 = pos[1] as f64 / count[1] as f64;
    Ok(Parity {
        delta_sp: (r0 - r1).abs(),
        rate_s0: r0,
        rate_s1: r1,
        count_s0: count[0],
        count_s1: count[1],
    })
}

pub fn accuracy(pred: &[u8], labels: &[u8], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::UndefinedMetric("accuracy over an empty mask".into()));
    }
    let hits = mask.iter().filter(|&&i| pred[i] == labels[i]).count();
    Ok(hits as f64 / mask.len() as f64)
}

/// F1 of the positive class. Zero when there are neither predicted nor
/// actual positives.
pub fn f1(pred: &[u8], labels: &[u8], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::UndefinedMetric("F1 over an empty mask".into()));
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for &i in mask {
        match (pred[i], labels[i]) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fneg += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    Ok(if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 })
}

/// Mann–Whitney rank statistic: the probability that a random positive
/// outscores a random negative, ties counted ½.
pub fn auc(scores: &[f64], labels: &[u8], mask: &[usize]) -> Result<f64> {
    let mut items: Vec<(f64, u8)> = mask.iter().map(|&i| (scores[i], labels[i])).collect();
    if items.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::NonFinite("AUC scores contain NaN".into()));
    }
    let n_pos = items.iter().filter(|x| x.1 == 1).count();
    let n_neg = items.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes in the mask".into()));
    }
    items.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // Twice the rank sum of the positives, with tied blocks sharing their mean rank.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        while j < items.len() && items[j].0 == items[i].0 {
            j += 1;
        }
        let pos_in_block = items[i..j].iter().filter(|x| x.1 == 1).count() as u128;
        // ranks i+1 ..= j, mean (i+1+j)/2
        rank_sum2 += pos_in_block * (i as u128 + 1 + j as u128);
        i = j;
    }
    let p = n_pos as u128;
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Argmax over two logits per row; ties go to class 0.
pub fn argmax_predictions(logits: &Tensor) -> Vec<u8> {
    logits.data().chunks(2).map(|r| (r[1] > r[0]) as u8).collect()
}

/// Logit margin of class 1, a monotone score for AUC.
pub fn positive_scores(logits: &Tensor) -> Vec<f64> {
    logits.data().chunks(2).map(|r| r[1] - r[0]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub nodes: usize,
    pub accuracy: f64,
    pub delta_sp: f64,
    pub f1: f64,
    /// `None` when the evaluated nodes carry a single class.
    pub auc: Option<f64>,
    pub rate_s0: f64,
    pub rate_s1: f64,
    pub count_s0: usize,
    pub count_s1: usize,
}

impl EvalReport {
    /// Metrics over the nodes whose logits are the rows of `logits`.
    pub fn from_logits(logits: &Tensor, labels: &[u8], sens: &[u8]) -> Result<Self> {
        let pred = argmax_predictions(logits);
        let scores = positive_scores(logits);
        if pred.len() != labels.len() || labels.len() != sens.len() {
            return Err(Error::Shape("logits, labels and sensitive values differ in length".into()));
        }
        let mask: Vec<usize> = (0..pred.len()).collect();
        let parity = statistical_parity(&pred, sens, &mask)?;
        let auc = match auc(&scores, labels, &mask) {
            Ok(v) => Some(v),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            nodes: mask.len(),
            accuracy: accuracy(&pred, labels, &mask)?,
            delta_sp: parity.delta_sp,
            f1: f1(&pred, labels, &mask)?,
            auc,
            rate_s0: parity.rate_s0,
            rate_s1: parity.rate_s1,
            count_s0: parity.count_s0,
            count_s1: parity.count_s1,
        })
    }

    /// key=value lines; rates in percent with two decimals.
    pub fn to_kv(&self, prefix: &str) -> String {
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        let auc = self.auc.map_or_else(|| "undefined".to_string(), pct);
        format!(
            "{prefix}nodes={}\n{prefix}accuracy={}\n{prefix}delta_sp={}\n{prefix}f1={}\n{prefix}auc={}\n\
             {prefix}rate_s0={}\n{prefix}rate_s1={}\n{prefix}count_s0={}\n{prefix}count_s1={}\n",
            self.nodes,
            pct(self.accuracy),
            pct(self.delta_sp),
            pct(self.f1),
            auc,
            pct(self.rate_s0),
            pct(self.rate_s1),
            self.count_s0,
            self.count_s1
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}
