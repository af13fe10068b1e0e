//! Training loop, seeded re-split cross-validation, ablations, sweeps and
//! the scaling benchmark.

mod config;
mod experiments;
mod optim;

pub use config::{Ablation, EvalScope, Optimizer, Selection, TrainConfig};
pub use experiments::{ablate, bench_scaling, sweep, sweep_table, BenchConfig, BenchReport, BenchRow, SweepParam};
pub use optim::OptimizerState;

use std::fmt::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{make_split, Graph, Split, SplitSpec};
use crate::hops::{build_group_graph, hop_aggregate, hop_aggregate_adjacency, AdjacencyNorm, HopNorm, HopStack};
use crate::metrics::{accuracy, argmax_predictions, statistical_parity, EvalReport};
use crate::model::{Model, ModelConfig};
use crate::spectral::{
    fuse_with, laplacian_small_eigenpairs, top_magnitude_eigenpairs, EigenOptions, FusedFeatures, SpectralBasis,
};

/// Token inputs for one ablation variant; independent of the split.
#[derive(Debug, Clone)]
pub struct Encoding {
    pub stack: HopStack,
    pub basis: Option<SpectralBasis>,
    pub warnings: Vec<String>,
}

pub fn encode(g: &Graph, cfg: &TrainConfig, ablation: Ablation) -> Result<Encoding> {
    let opts = EigenOptions {
        tol: cfg.eig_tol,
        seed: cfg.seed,
        ..Default::default()
    };
    let basis = match ablation {
        Ablation::NoSt => None,
        Ablation::LapSt => Some(laplacian_small_eigenpairs(g, cfg.t, &opts)?),
        _ => Some(top_magnitude_eigenpairs(g, cfg.t, &opts)?),
    };
    let fused = match &basis {
        Some(b) => fuse_with(g, b, cfg.scale_structure)?,
        None => FusedFeatures::without_structure(g),
    };
    let k = if ablation == Ablation::NoNf { 0 } else { cfg.k };
    let stack = match ablation {
        Ablation::AdjNf => {
            let norm = match cfg.hop_norm {
                HopNorm::Raw => AdjacencyNorm::Raw,
                HopNorm::GroupMean => AdjacencyNorm::RowNormalized,
            };
            hop_aggregate_adjacency(g, &fused.matrix, k, norm)?
        }
        _ => hop_aggregate(&build_group_graph(g), &fused.matrix, k, cfg.hop_norm)?,
    };
    let warnings = basis
        .iter()
        .flat_map(|b| b.warnings.iter().map(|w| w.to_string()))
        .collect();
    Ok(Encoding { stack, basis, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub split: Split,
    pub split_fingerprint: String,
    pub initial_val_accuracy: f64,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub epochs_run: usize,
    pub final_train_accuracy: f64,
    pub test: EvalReport,
    pub log: Vec<EpochLog>,
    pub model: Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single fold.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Stat {
            mean,
            std: var.sqrt(),
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: TrainConfig,
    pub folds: Vec<FoldResult>,
    pub accuracy: Stat,
    pub delta_sp: Stat,
    pub f1: Stat,
    /// `None` when some fold had a single-class evaluation set.
    pub auc: Option<Stat>,
    pub warnings: Vec<String>,
    pub seconds: f64,
}

#[derive(Serialize)]
struct FoldJson<'a> {
    fold: usize,
    split: &'a str,
    initial_val_accuracy: f64,
    best_epoch: usize,
    best_val_accuracy: f64,
    epochs_run: usize,
    test: &'a EvalReport,
}

#[derive(Serialize)]
struct RunJson<'a> {
    ablation: &'a str,
    folds: Vec<FoldJson<'a>>,
    accuracy: Stat,
    delta_sp: Stat,
    f1: Stat,
    auc: Option<Stat>,
    warnings: &'a [String],
}

impl RunResult {
    /// key=value report; metrics in percent with two decimals. Wall-clock
    /// time is deliberately left out so reports are reproducible.
    pub fn to_report_kv(&self) -> String {
        let mut s = String::new();
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        let _ = writeln!(s, "ablation={}", self.config.ablation.as_str());
        let _ = writeln!(s, "folds={}", self.folds.len());
        let mut stat = |name: &str, st: Option<Stat>| match st {
            Some(st) => {
                let _ = writeln!(s, "{name}_mean={}\n{name}_std={}", pct(st.mean), pct(st.std));
            }
            None => {
                let _ = writeln!(s, "{name}_mean=undefined\n{name}_std=undefined");
            }
        };
        stat("accuracy", Some(self.accuracy));
        stat("delta_sp", Some(self.delta_sp));
        stat("f1", Some(self.f1));
        stat("auc", self.auc);
        for w in &self.warnings {
            let _ = writeln!(s, "warning={w}");
        }
        for f in &self.folds {
            let p = format!("fold{}.", f.fold);
            let _ = writeln!(s, "{p}split={}", f.split_fingerprint);
            let _ = writeln!(s, "{p}best_epoch={}", f.best_epoch);
            let _ = writeln!(s, "{p}val_accuracy={}", pct(f.best_val_accuracy));
            s.push_str(&f.test.to_kv(&format!("{p}test.")));
        }
        s
    }

    pub fn to_json(&self) -> String {
        let doc = RunJson {
            ablation: self.config.ablation.as_str(),
            folds: self
                .folds
                .iter()
                .map(|f| FoldJson {
                    fold: f.fold,
                    split: &f.split_fingerprint,
                    initial_val_accuracy: f.initial_val_accuracy,
                    best_epoch: f.best_epoch,
                    best_val_accuracy: f.best_val_accuracy,
                    epochs_run: f.epochs_run,
                    test: &f.test,
                })
                .collect(),
            accuracy: self.accuracy,
            delta_sp: self.delta_sp,
            f1: self.f1,
            auc: self.auc,
            warnings: &self.warnings,
        };
        serde_json::to_string_pretty(&doc).expect("plain data serializes")
    }

    /// One line per fold and epoch.
    pub fn metrics_log(&self) -> String {
        let mut s = String::new();
        for f in &self.folds {
            for e in &f.log {
                let _ = writeln!(
                    s,
                    "ablation={} fold={} epoch={} loss={:.6} val_accuracy={:.2}",
                    self.config.ablation.as_str(),
                    f.fold,
                    e.epoch,
                    e.loss,
                    100.0 * e.val_accuracy
                );
            }
        }
        s
    }
}

fn split_spec(cfg: &TrainConfig) -> SplitSpec {
    SplitSpec {
        train_per_class_cap: cfg.train_per_class_cap,
        seed: cfg.seed,
        folds: cfg.folds,
        ..Default::default()
    }
}

/// The split used by fold `fold` for this configuration.
pub fn fold_split(g: &Graph, cfg: &TrainConfig, fold: usize) -> Result<Split> {
    let spec = split_spec(cfg);
    make_split(g, &SplitSpec { seed: spec.fold_seed(fold), ..spec })
}

fn model_config(cfg: &TrainConfig, stack: &HopStack, t: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        d_in: stack.width(),
        k: stack.k(),
        t,
        d_hidden: cfg.d_hidden,
        layers: cfg.layers,
        heads: cfg.heads,
        ffn_mult: 4,
        dropout: cfg.dropout,
        readout: cfg.readout,
        tanh_gelu: cfg.tanh_gelu,
        seed,
    }
}

struct Candidate {
    epoch: usize,
    val_accuracy: f64,
    params: Vec<f64>,
}

fn labels_of(g: &Graph, nodes: &[usize]) -> (Vec<u8>, Vec<u8>) {
    let s = g.sensitive();
    (nodes.iter().map(|&i| g.labels()[i]).collect(), nodes.iter().map(|&i| s[i]).collect())
}

pub fn train_fold(g: &Graph, enc: &Encoding, cfg: &TrainConfig, fold: usize) -> Result<FoldResult> {
    let spec = split_spec(cfg);
    let fold_seed = spec.fold_seed(fold);
    let split = make_split(g, &SplitSpec { seed: fold_seed, ..spec })?;
    let t = enc.basis.as_ref().map_or(0, SpectralBasis::t);
    let mcfg = model_config(cfg, &enc.stack, t, fold_seed ^ 0x5EED_0F_FA17);
    let mut model = Model::new(mcfg)?;
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(fold_seed.wrapping_add(1));
    let diverged = |epoch: usize, detail: String| Error::Divergence { fold, epoch, detail };

    let train_targets: Vec<usize> = split.train.iter().map(|&i| g.labels()[i] as usize).collect();
    let (val_labels, val_sens) = labels_of(g, &split.val);
    let val_all: Vec<usize> = (0..split.val.len()).collect();
    let evaluate_val = |m: &Model| -> Result<(f64, Option<f64>)> {
        let pred = argmax_predictions(&m.logits(&enc.stack, &split.val)?);
        let acc = accuracy(&pred, &val_labels, &val_all)?;
        let dsp = statistical_parity(&pred, &val_sens, &val_all).ok().map(|p| p.delta_sp);
        Ok((acc, dsp))
    };
    let admissible = |dsp: Option<f64>| match cfg.selection {
        Selection::ValAccuracy => true,
        Selection::FairValAccuracy { max_delta_sp } => dsp.is_some_and(|d| d <= max_delta_sp),
    };

    let (init_acc, init_dsp) = evaluate_val(&model)?;
    let initial = Candidate { epoch: 0, val_accuracy: init_acc, params: model.params.flatten() };
    let mut best_any = Candidate { epoch: 0, val_accuracy: init_acc, params: initial.params.clone() };
    let mut best_fair = admissible(init_dsp).then_some(initial);

    let mut opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate, cfg.weight_decay, model.params.num_values());
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut since_best = 0;
    let mut epochs_run = 0;
    for epoch in 1..=cfg.epochs {
        let rng = (cfg.dropout > 0.0).then_some(&mut dropout_rng);
        let (loss, grads) = model
            .loss_and_grads(&enc.stack, &split.train, &train_targets, rng)
            .map_err(|e| match e {
                Error::NonFinite(d) => diverged(epoch, d),
                other => other,
            })?;
        if !loss.is_finite() {
            return Err(diverged(epoch, format!("training loss is {loss}")));
        }
        let mut flat = model.params.flatten();
        opt.step(&mut flat, &grads.flatten());
        model.params.unflatten(&flat);
        let (acc, dsp) = evaluate_val(&model).map_err(|e| match e {
            Error::NonFinite(d) => diverged(epoch, d),
            other => other,
        })?;
        log.push(EpochLog { epoch, loss, val_accuracy: acc });
        epochs_run = epoch;
        if acc > best_any.val_accuracy {
            best_any = Candidate { epoch, val_accuracy: acc, params: flat.clone() };
        }
        if admissible(dsp) && best_fair.as_ref().is_none_or(|b| acc > b.val_accuracy) {
            best_fair = Some(Candidate { epoch, val_accuracy: acc, params: flat });
            since_best = 0;
        } else {
            since_best += 1;
        }
        if cfg.patience.is_some_and(|p| since_best >= p) {
            break;
        }
    }
    let best = best_fair.unwrap_or(best_any);
    model.params.unflatten(&best.params);

    let eval_nodes = match cfg.eval_scope {
        EvalScope::Test => split.test.clone(),
        EvalScope::AllLabeled => g.labeled_nodes(),
    };
    let (labels, sens) = labels_of(g, &eval_nodes);
    let test = EvalReport::from_logits(&model.logits(&enc.stack, &eval_nodes)?, &labels, &sens)?;
    let train_pred = argmax_predictions(&model.logits(&enc.stack, &split.train)?);
    let train_labels: Vec<u8> = train_targets.iter().map(|&y| y as u8).collect();
    let final_train_accuracy = accuracy(&train_pred, &train_labels, &(0..split.train.len()).collect::<Vec<_>>())?;
    Ok(FoldResult {
        fold,
        split_fingerprint: split.fingerprint(),
        split,
        initial_val_accuracy: init_acc,
        best_epoch: best.epoch,
        best_val_accuracy: best.val_accuracy,
        epochs_run,
        final_train_accuracy,
        test,
        log,
        model,
    })
}

/// Trains `cfg.folds` independent seeded re-splits and aggregates the test
/// metrics. Folds run in parallel unless `cfg.serial`; every fold is seeded
/// on its own, so both modes give the same numbers.
pub fn train(g: &Graph, cfg: &TrainConfig) -> Result<RunResult> {
    cfg.validate()?;
    let start = Instant::now();
    let enc = encode(g, cfg, cfg.ablation)?;
    let folds: Vec<FoldResult> = if cfg.serial {
        (0..cfg.folds).map(|f| train_fold(g, &enc, cfg, f)).collect::<Result<_>>()?
    } else {
        (0..cfg.folds).into_par_iter().map(|f| train_fold(g, &enc, cfg, f)).collect::<Result<_>>()?
    };
    let pick = |f: fn(&FoldResult) -> f64| Stat::of(&folds.iter().map(f).collect::<Vec<_>>());
    let aucs: Option<Vec<f64>> = folds.iter().map(|f| f.test.auc).collect();
    Ok(RunResult {
        config: cfg.clone(),
        accuracy: pick(|f| f.test.accuracy),
        delta_sp: pick(|f| f.test.delta_sp),
        f1: pick(|f| f.test.f1),
        auc: aucs.map(|a| Stat::of(&a)),
        folds,
        warnings: enc.warnings,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::linearly_separable;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 200,
            folds: 1,
            d_hidden: 16,
            t: 2,
            k: 2,
            learning_rate: 1e-2,
            serial: true,
            ..Default::default()
        }
    }

    #[test]
    fn separable_fixture_is_fit() {
        let g = linearly_separable(1).unwrap();
        let run = train(&g, &small_cfg()).unwrap();
        assert_eq!(run.folds[0].final_train_accuracy, 1.0);
        assert!(run.folds[0].best_val_accuracy >= run.folds[0].initial_val_accuracy);
        assert!(run.folds[0].log.iter().all(|e| e.loss.is_finite()));
    }

    #[test]
    fn zero_epochs_rejected() {
        let g = linearly_separable(1).unwrap();
        let cfg = TrainConfig { epochs: 0, ..small_cfg() };
        assert!(matches!(train(&g, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn stat_bounds() {
        let s = Stat::of(&[0.2, 0.5, 0.3]);
        assert!(s.min <= s.mean && s.mean <= s.max);
        assert_eq!(Stat::of(&[0.4]).std, 0.0);
    }
}
