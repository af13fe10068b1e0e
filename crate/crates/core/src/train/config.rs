use std::fmt::Write;

use crate::error::{Error, Result};
use crate::hops::HopNorm;
use crate::model::Readout;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    Full,
    /// H′ = H: no structure matrix.
    NoSt,
    /// Laplacian eigenvectors instead of adjacency eigenvectors.
    LapSt,
    /// Hop-0 token only (k = 0).
    NoNf,
    /// Hops through the adjacency instead of the sensitive-group graph.
    AdjNf,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [Ablation::Full, Ablation::NoSt, Ablation::LapSt, Ablation::NoNf, Ablation::AdjNf];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoSt => "no_st",
            Ablation::LapSt => "lap_st",
            Ablation::NoNf => "no_nf",
            Ablation::AdjNf => "adj_nf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation {s:?} (full | no_st | lap_st | no_nf | adj_nf)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    /// Best validation accuracy.
    ValAccuracy,
    /// Best validation accuracy among epochs whose validation Δ_SP does not
    /// exceed the bound; falls back to plain accuracy when none qualifies.
    FairValAccuracy { max_delta_sp: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalScope {
    Test,
    AllLabeled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: Optimizer,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    pub folds: usize,
    pub ablation: Ablation,
    pub k: usize,
    pub t: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_hidden: usize,
    pub dropout: f64,
    pub readout: Readout,
    pub hop_norm: HopNorm,
    pub train_per_class_cap: usize,
    pub seed: u64,
    pub serial: bool,
    pub selection: Selection,
    pub eval_scope: EvalScope,
    pub eig_tol: f64,
    pub scale_structure: bool,
    pub tanh_gelu: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            optimizer: Optimizer::Adam,
            patience: None,
            folds: 5,
            ablation: Ablation::Full,
            k: 3,
            t: 5,
            layers: 1,
            heads: 1,
            d_hidden: 128,
            dropout: 0.1,
            readout: Readout::Attention,
            hop_norm: HopNorm::GroupMean,
            train_per_class_cap: 50,
            seed: 0,
            serial: false,
            selection: Selection::ValAccuracy,
            eval_scope: EvalScope::Test,
            eig_tol: 1e-10,
            scale_structure: false,
            tanh_gelu: false,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.folds == 0 {
            return Err(Error::Config("folds must be at least 1".into()));
        }
        if self.layers == 0 || self.d_hidden == 0 || self.heads == 0 {
            return Err(Error::Config("layers, hidden and heads must be positive".into()));
        }
        if self.d_hidden % self.heads != 0 {
            return Err(Error::Config(format!("hidden {} is not divisible by heads {}", self.d_hidden, self.heads)));
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::Config("learning rate must be positive and weight decay non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.train_per_class_cap == 0 {
            return Err(Error::Config("train_per_class_cap must be positive".into()));
        }
        Ok(())
    }

    /// Sets one field from its textual key, as used by manifests and `--set`.
    pub fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "epochs" => self.epochs = num(key, v)?,
            "lr" | "learning_rate" => self.learning_rate = num(key, v)?,
            "weight_decay" => self.weight_decay = num(key, v)?,
            "optimizer" => {
                self.optimizer = match v {
                    "adam" => Optimizer::Adam,
                    "sgd" => Optimizer::Sgd,
                    _ => return Err(Error::Config(format!("unknown optimizer {v:?} (adam | sgd)"))),
                }
            }
            "patience" => self.patience = if v == "none" { None } else { Some(num(key, v)?) },
            "folds" => self.folds = num(key, v)?,
            "ablation" => self.ablation = Ablation::parse(v)?,
            "k" => self.k = num(key, v)?,
            "t" => self.t = num(key, v)?,
            "layers" | "l" => self.layers = num(key, v)?,
            "heads" => self.heads = num(key, v)?,
            "hidden" | "d_hidden" => self.d_hidden = num(key, v)?,
            "dropout" => self.dropout = num(key, v)?,
            "readout" => self.readout = Readout::parse(v)?,
            "norm" | "hop_norm" => self.hop_norm = HopNorm::parse(v)?,
            "cap" | "train_per_class_cap" => self.train_per_class_cap = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "serial" => self.serial = boolean(key, v)?,
            "selection" => {
                self.selection = match v.split_once(':') {
                    None if v == "accuracy" => Selection::ValAccuracy,
                    Some(("fair", bound)) => Selection::FairValAccuracy { max_delta_sp: num(key, bound)? },
                    _ => return Err(Error::Config(format!("unknown selection {v:?} (accuracy | fair:<max Δ_SP>)"))),
                }
            }
            "eval" => {
                self.eval_scope = match v {
                    "test" => EvalScope::Test,
                    "all" => EvalScope::AllLabeled,
                    _ => return Err(Error::Config(format!("unknown eval scope {v:?} (test | all)"))),
                }
            }
            "eig_tol" => self.eig_tol = num(key, v)?,
            "scale_structure" => self.scale_structure = boolean(key, v)?,
            "tanh_gelu" => self.tanh_gelu = boolean(key, v)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Stable key=value echo of every field.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let selection = match self.selection {
            Selection::ValAccuracy => "accuracy".to_string(),
            Selection::FairValAccuracy { max_delta_sp } => format!("fair:{max_delta_sp}"),
        };
        let fields: [(&str, String); 22] = [
            ("epochs", self.epochs.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("optimizer", if self.optimizer == Optimizer::Adam { "adam" } else { "sgd" }.into()),
            ("patience", self.patience.map_or("none".into(), |p| p.to_string())),
            ("folds", self.folds.to_string()),
            ("ablation", self.ablation.as_str().into()),
            ("k", self.k.to_string()),
            ("t", self.t.to_string()),
            ("layers", self.layers.to_string()),
            ("heads", self.heads.to_string()),
            ("d_hidden", self.d_hidden.to_string()),
            ("dropout", self.dropout.to_string()),
            ("readout", self.readout.as_str().into()),
            ("hop_norm", self.hop_norm.as_str().into()),
            ("train_per_class_cap", self.train_per_class_cap.to_string()),
            ("seed", self.seed.to_string()),
            ("selection", selection),
            ("eval", if self.eval_scope == EvalScope::Test { "test" } else { "all" }.into()),
            ("eig_tol", self.eig_tol.to_string()),
            ("scale_structure", self.scale_structure.to_string()),
            ("tanh_gelu", self.tanh_gelu.to_string()),
        ];
        for (k, v) in fields {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}
