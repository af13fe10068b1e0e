//! Direct evaluation of a pre-LN transformer block on one token sequence.
//!
//! Tokens are rows. Nothing here is batched or cached; every quantity is
//! recomputed from its textbook definition.

use crate::dense::{dense_matmul, transpose};
use crate::DenseRows;

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct BlockWeights {
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub w_q: DenseRows,
    pub b_q: Vec<f64>,
    pub w_k: DenseRows,
    pub b_k: Vec<f64>,
    pub w_v: DenseRows,
    pub b_v: Vec<f64>,
    pub w_o: DenseRows,
    pub b_o: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
    pub ffn_w1: DenseRows,
    pub ffn_b1: Vec<f64>,
    pub ffn_w2: DenseRows,
    pub ffn_b2: Vec<f64>,
}

pub fn affine(x: &[Vec<f64>], w: &[Vec<f64>], b: &[f64]) -> DenseRows {
    let mut y = dense_matmul(x, w).expect("affine: shape mismatch");
    for row in &mut y {
        for (v, bb) in row.iter_mut().zip(b) {
            *v += bb;
        }
    }
    y
}

pub fn layer_norm_row(x: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Vec<f64> {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
    let denom = (var + eps).sqrt();
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / denom * gain[i] + bias[i])
        .collect()
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_tanh(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn columns(x: &[Vec<f64>], start: usize, end: usize) -> DenseRows {
    x.iter().map(|r| r[start..end].to_vec()).collect()
}

/// softmax(Q K^T / sqrt(d_head)) V per head, heads concatenated.
/// Returns the concatenated output and the per-head attention matrices.
pub fn self_attention(
    x: &[Vec<f64>],
    w: &BlockWeights,
    heads: usize,
) -> (DenseRows, Vec<DenseRows>) {
    let q = affine(x, &w.w_q, &w.b_q);
    let k = affine(x, &w.w_k, &w.b_k);
    let v = affine(x, &w.w_v, &w.b_v);
    let width = q[0].len();
    let dh = width / heads;
    let mut out = vec![Vec::with_capacity(width); x.len()];
    let mut weights = Vec::new();
    for h in 0..heads {
        let (qh, kh, vh) = (
            columns(&q, h * dh, (h + 1) * dh),
            columns(&k, h * dh, (h + 1) * dh),
            columns(&v, h * dh, (h + 1) * dh),
        );
        let scores = dense_matmul(&qh, &transpose(&kh)).unwrap();
        let scale = 1.0 / (dh as f64).sqrt();
        let attn: DenseRows = scores
            .iter()
            .map(|r| softmax(&r.iter().map(|s| s * scale).collect::<Vec<_>>()))
            .collect();
        let ctx = dense_matmul(&attn, &vh).unwrap();
        for (o, c) in out.iter_mut().zip(ctx) {
            o.extend(c);
        }
        weights.push(attn);
    }
    (out, weights)
}

/// T' = MHA(LN(T)) + T ; T_out = FFN(LN(T')) + T'.
pub fn encoder_layer(x: &[Vec<f64>], w: &BlockWeights, heads: usize) -> DenseRows {
    let normed: DenseRows = x
        .iter()
        .map(|r| layer_norm_row(r, &w.ln1_gain, &w.ln1_bias, LN_EPS))
        .collect();
    let (ctx, _) = self_attention(&normed, w, heads);
    let attn_out = affine(&ctx, &w.w_o, &w.b_o);
    let mid: DenseRows = x
        .iter()
        .zip(&attn_out)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect())
        .collect();
    let normed2: DenseRows = mid
        .iter()
        .map(|r| layer_norm_row(r, &w.ln2_gain, &w.ln2_bias, LN_EPS))
        .collect();
    let hidden: DenseRows = affine(&normed2, &w.ffn_w1, &w.ffn_b1)
        .into_iter()
        .map(|r| r.into_iter().map(gelu).collect())
        .collect();
    let ffn = affine(&hidden, &w.ffn_w2, &w.ffn_b2);
    mid.iter()
        .zip(&ffn)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect())
        .collect()
}

/// Softmax over tokens of `tokens · u`, then the weighted token sum.
pub fn attention_readout(tokens: &[Vec<f64>], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let scores: Vec<f64> = tokens
        .iter()
        .map(|r| r.iter().zip(u).map(|(a, b)| a * b).sum())
        .collect();
    let a = softmax(&scores);
    let width = tokens[0].len();
    let mut emb = vec![0.0; width];
    for (wj, row) in a.iter().zip(tokens) {
        for (e, v) in emb.iter_mut().zip(row) {
            *e += wj * v;
        }
    }
    (emb, a)
}
