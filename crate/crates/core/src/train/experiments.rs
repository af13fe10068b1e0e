use std::fmt::Write;
use std::ops::RangeInclusive;
use std::time::Instant;

use serde::Serialize;

use super::{encode, train, Ablation, RunResult, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{Model, ModelConfig};
use crate::synthetic::bench_graph;

/// One run per ablation variant, in `Ablation::ALL` order. Every variant uses
/// the same seed, so the per-fold splits coincide.
pub fn ablate(g: &Graph, base: &TrainConfig) -> Result<Vec<RunResult>> {
    Ablation::ALL
        .iter()
        .map(|&ablation| train(g, &TrainConfig { ablation, ..base.clone() }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    T,
    Layers,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "t" => Ok(SweepParam::T),
            "L" | "l" | "layers" => Ok(SweepParam::Layers),
            _ => Err(Error::Config(format!("unknown sweep parameter {s:?} (expected t or L)"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::T => "t",
            SweepParam::Layers => "L",
        }
    }
}

pub fn sweep(
    g: &Graph,
    base: &TrainConfig,
    param: SweepParam,
    values: RangeInclusive<usize>,
) -> Result<Vec<(usize, RunResult)>> {
    if values.is_empty() {
        return Err(Error::Config("sweep range is empty".into()));
    }
    values
        .map(|v| {
            let mut cfg = base.clone();
            match param {
                SweepParam::T => cfg.t = v,
                SweepParam::Layers => cfg.layers = v,
            }
            train(g, &cfg).map(|r| (v, r))
        })
        .collect()
}

/// Tab-separated table, header plus one row per swept value. Metrics are
/// percentages.
pub fn sweep_table(param: SweepParam, rows: &[(usize, RunResult)]) -> String {
    let mut s = format!(
        "{}\taccuracy_mean\taccuracy_std\tdelta_sp_mean\tdelta_sp_std\tf1_mean\tauc_mean\n",
        param.as_str()
    );
    for (v, r) in rows {
        let auc = r.auc.map_or("undefined".to_string(), |a| format!("{:.2}", 100.0 * a.mean));
        let _ = writeln!(
            s,
            "{v}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{auc}",
            100.0 * r.accuracy.mean,
            100.0 * r.accuracy.std,
            100.0 * r.delta_sp.mean,
            100.0 * r.delta_sp.std,
            100.0 * r.f1.mean,
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub d: usize,
    pub k: usize,
    pub t: usize,
    pub d_hidden: usize,
    /// Each timing is the minimum over this many repetitions.
    pub repeats: usize,
    pub eig_tol: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![1000, 2000, 4000, 8000],
            d: 8,
            k: 3,
            t: 5,
            d_hidden: 16,
            repeats: 3,
            eig_tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub encode_seconds: f64,
    pub epoch_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Least-squares slope of log(time) against log(n).
    pub encode_exponent: f64,
    pub epoch_exponent: f64,
    /// Largest per-epoch time ratio between consecutive sizes.
    pub max_epoch_ratio: f64,
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        let mut s = String::from("n\tencode_seconds\tepoch_seconds\n");
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{:.6}\t{:.6}", r.n, r.encode_seconds, r.epoch_seconds);
        }
        let _ = writeln!(s, "# encode_exponent={:.3}", self.encode_exponent);
        let _ = writeln!(s, "# epoch_exponent={:.3}", self.epoch_exponent);
        let _ = writeln!(s, "# max_epoch_ratio={:.3}", self.max_epoch_ratio);
        s
    }
}

pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn min_time<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        std::hint::black_box(f()?);
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

/// Times encoding (eigenpairs plus hop aggregation) and one full-batch
/// training step over all nodes, on synthetic graphs of growing size.
pub fn bench_scaling(bc: &BenchConfig) -> Result<BenchReport> {
    if bc.sizes.is_empty() {
        return Err(Error::Config("bench needs at least one size".into()));
    }
    let cfg = TrainConfig {
        k: bc.k,
        t: bc.t,
        d_hidden: bc.d_hidden,
        eig_tol: bc.eig_tol,
        dropout: 0.0,
        seed: bc.seed,
        ..Default::default()
    };
    let mut rows = Vec::with_capacity(bc.sizes.len());
    for &n in &bc.sizes {
        let g = bench_graph(n, bc.d, bc.t + 1, bc.seed)?;
        let encode_seconds = min_time(bc.repeats, || encode(&g, &cfg, Ablation::Full))?;
        let enc = encode(&g, &cfg, Ablation::Full)?;
        let model = Model::new(ModelConfig {
            d_hidden: bc.d_hidden,
            dropout: 0.0,
            seed: bc.seed,
            ..ModelConfig::new(enc.stack.width(), bc.k, bc.t)
        })?;
        let nodes: Vec<usize> = (0..n).collect();
        let targets: Vec<usize> = g.labels().iter().map(|&y| y as usize).collect();
        let epoch_seconds = min_time(bc.repeats, || model.loss_and_grads(&enc.stack, &nodes, &targets, None))?;
        rows.push(BenchRow { n, encode_seconds, epoch_seconds });
    }
    let (encode_exponent, epoch_exponent) = if rows.len() > 1 {
        let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let enc: Vec<f64> = rows.iter().map(|r| r.encode_seconds).collect();
        let ep: Vec<f64> = rows.iter().map(|r| r.epoch_seconds).collect();
        (loglog_slope(&xs, &enc), loglog_slope(&xs, &ep))
    } else {
        (f64::NAN, f64::NAN)
    };
    let max_epoch_ratio = rows
        .windows(2)
        .map(|w| w[1].epoch_seconds / w[0].epoch_seconds)
        .fold(f64::NAN, f64::max);
    Ok(BenchReport { rows, encode_exponent, epoch_exponent, max_epoch_ratio })
}
