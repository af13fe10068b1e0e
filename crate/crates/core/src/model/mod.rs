//! The FairGT network: token projection, pre-LN transformer layers with
//! attention restricted to each node's own hop tokens, an attention readout
//! over hops, and a two-logit linear classifier.

mod weights;

pub use weights::{LayerWeights, ModelParams, Weights};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Checkpoint, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::hops::HopStack;

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    /// Softmax over hops of T·u, then the weighted token sum.
    Attention,
    Mean,
}

impl Readout {
    pub fn as_str(self) -> &'static str {
        match self {
            Readout::Attention => "attention",
            Readout::Mean => "mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(Readout::Attention),
            "mean" => Ok(Readout::Mean),
            _ => Err(Error::Config(format!("unknown readout {s:?} (attention | mean)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Token width d′ (d + t unless the structure encoding is off).
    pub d_in: usize,
    pub k: usize,
    pub t: usize,
    pub d_hidden: usize,
    pub layers: usize,
    pub heads: usize,
    /// FFN inner width is ffn_mult · d_hidden.
    pub ffn_mult: usize,
    pub dropout: f64,
    pub readout: Readout,
    pub tanh_gelu: bool,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(d_in: usize, k: usize, t: usize) -> Self {
        Self {
            d_in,
            k,
            t,
            d_hidden: 128,
            layers: 1,
            heads: 1,
            ffn_mult: 4,
            dropout: 0.1,
            readout: Readout::Attention,
            tanh_gelu: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_hidden == 0 || self.ffn_mult == 0 {
            return Err(Error::Config("model widths must be positive".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be at least 1".into()));
        }
        if self.heads == 0 || self.d_hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_hidden {} is not divisible by heads {}",
                self.d_hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn seq_len(&self) -> usize {
        self.k + 1
    }

    pub fn d_ff(&self) -> usize {
        self.ffn_mult * self.d_hidden
    }

    /// key=value lines, stored as the checkpoint header.
    pub fn to_header(&self) -> String {
        format!(
            "d_in={}\nk={}\nt={}\nd_hidden={}\nlayers={}\nheads={}\nffn_mult={}\ndropout={}\nreadout={}\ntanh_gelu={}\nseed={}\n",
            self.d_in,
            self.k,
            self.t,
            self.d_hidden,
            self.layers,
            self.heads,
            self.ffn_mult,
            self.dropout,
            self.readout.as_str(),
            self.tanh_gelu,
            self.seed
        )
    }

    pub fn from_header(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::new(1, 0, 0);
        let bad = |k: &str, v: &str| Error::Format(format!("checkpoint header: bad {k}={v}"));
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format(format!("checkpoint header line {line:?}")))?;
            let us = || v.parse::<usize>().map_err(|_| bad(k, v));
            match k {
                "d_in" => cfg.d_in = us()?,
                "k" => cfg.k = us()?,
                "t" => cfg.t = us()?,
                "d_hidden" => cfg.d_hidden = us()?,
                "layers" => cfg.layers = us()?,
                "heads" => cfg.heads = us()?,
                "ffn_mult" => cfg.ffn_mult = us()?,
                "dropout" => cfg.dropout = v.parse().map_err(|_| bad(k, v))?,
                "readout" => cfg.readout = Readout::parse(v)?,
                "tanh_gelu" => cfg.tanh_gelu = v.parse().map_err(|_| bad(k, v))?,
                "seed" => cfg.seed = v.parse().map_err(|_| bad(k, v))?,
                _ => return Err(Error::Format(format!("checkpoint header: unknown key {k}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Values recorded during a forward pass, for inspection and tests.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `attention[l][h]` has shape [B, k+1, k+1].
    pub attention: Vec<Vec<Var>>,
    /// Readout weights, shape [B, k+1].
    pub readout: Var,
}

/// T⁰ = X·β + b with X of shape [B·(k+1), d′].
pub fn project_tokens(tape: &mut Tape, x: Var, beta: Var, bias: Var) -> Result<Var> {
    let t = tape.matmul(x, beta)?;
    tape.add_row_bias(t, bias)
}

fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_row_bias(y, b)
}

/// One pre-LN block over B nodes of `seq` tokens each:
/// T′ = MHA(LN(T)) + T, T_out = FFN(LN(T′)) + T′.
/// Returns the output and the per-head attention weights.
pub fn encoder_layer(
    tape: &mut Tape,
    t: Var,
    w: &LayerWeights<Var>,
    batch: usize,
    seq: usize,
    heads: usize,
    dropout: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Var, Vec<Var>)> {
    let width = tape.value(t).last_dim();
    let dh = width / heads;
    let z = tape.layer_norm(t, w.ln1_gain, w.ln1_bias, LN_EPS)?;
    let q = affine(tape, z, w.w_q, w.b_q)?;
    let k = affine(tape, z, w.w_k, w.b_k)?;
    let v = affine(tape, z, w.w_v, w.b_v)?;
    let mut contexts = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let split = |tape: &mut Tape, m: Var| -> Result<Var> {
            let s = tape.slice_cols(m, h * dh, (h + 1) * dh)?;
            tape.reshape(s, &[batch, seq, dh])
        };
        let (qh, kh, vh) = (split(tape, q)?, split(tape, k)?, split(tape, v)?);
        let scores = tape.bmm(qh, kh, true)?;
        let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
        let p = tape.softmax(scores)?;
        weights.push(p);
        let p = match rng.as_deref_mut() {
            Some(r) => tape.dropout(p, dropout, r)?,
            None => p,
        };
        let ctx = tape.bmm(p, vh, false)?;
        contexts.push(tape.reshape(ctx, &[batch * seq, dh])?);
    }
    let ctx = if heads == 1 { contexts[0] } else { tape.concat_cols(&contexts)? };
    let attn = affine(tape, ctx, w.w_o, w.b_o)?;
    let mid = tape.add(attn, t)?;
    let z2 = tape.layer_norm(mid, w.ln2_gain, w.ln2_bias, LN_EPS)?;
    let hidden = affine(tape, z2, w.ffn_w1, w.ffn_b1)?;
    let hidden = tape.gelu(hidden);
    let hidden = match rng {
        Some(r) => tape.dropout(hidden, dropout, r)?,
        None => hidden,
    };
    let ffn = affine(tape, hidden, w.ffn_w2, w.ffn_b2)?;
    Ok((tape.add(ffn, mid)?, weights))
}

/// Collapses each node's `seq` tokens into one embedding [B, width].
/// Returns the embedding and the hop weights [B, seq].
pub fn readout(tape: &mut Tape, t: Var, u: Var, batch: usize, seq: usize, mode: Readout) -> Result<(Var, Var)> {
    let width = tape.value(t).last_dim();
    let a = match mode {
        Readout::Attention => {
            let u_col = tape.reshape(u, &[width, 1])?;
            let scores = tape.matmul(t, u_col)?;
            let scores = tape.reshape(scores, &[batch, seq])?;
            tape.softmax(scores)?
        }
        Readout::Mean => tape.constant(Tensor::filled(&[batch, seq], 1.0 / seq as f64)),
    };
    let a3 = tape.reshape(a, &[batch, 1, seq])?;
    let t3 = tape.reshape(t, &[batch, seq, width])?;
    let emb = tape.bmm(a3, t3, false)?;
    Ok((tape.reshape(emb, &[batch, width])?, a))
}

/// Logits [B, 2] for B nodes whose tokens are stacked in `tokens`
/// ([B·(k+1), d′], node-major). Dropout is active only when `rng` is given.
pub fn forward(
    tape: &mut Tape,
    w: &Weights<Var>,
    tokens: Var,
    batch: usize,
    cfg: &ModelConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Var, ForwardTrace)> {
    let seq = cfg.seq_len();
    if tape.value(tokens).shape() != [batch * seq, cfg.d_in] {
        return Err(Error::Shape(format!(
            "tokens have shape {:?}, expected [{}, {}]",
            tape.value(tokens).shape(),
            batch * seq,
            cfg.d_in
        )));
    }
    tape.use_tanh_gelu(cfg.tanh_gelu);
    let mut t = project_tokens(tape, tokens, w.beta, w.beta_bias)?;
    let mut attention = Vec::with_capacity(cfg.layers);
    for (l, lw) in w.layers.iter().enumerate() {
        let (next, att) = encoder_layer(tape, t, lw, batch, seq, cfg.heads, cfg.dropout, rng.as_deref_mut())?;
        if !tape.value(next).is_finite() {
            return Err(Error::NonFinite(format!("encoder layer {l} produced a non-finite value")));
        }
        t = next;
        attention.push(att);
    }
    let (emb, a) = readout(tape, t, w.readout_u, batch, seq, cfg.readout)?;
    let logits = affine(tape, emb, w.classifier_w, w.classifier_b)?;
    Ok((logits, ForwardTrace { attention, readout: a }))
}

/// Stacks the tokens of `nodes` into a [B·(k+1), d′] tensor.
pub fn token_input(stack: &HopStack, nodes: &[usize]) -> Result<Tensor> {
    let seq = stack.k() + 1;
    let mut data = Vec::with_capacity(nodes.len() * seq * stack.width());
    for &v in nodes {
        if v >= stack.n() {
            return Err(Error::Shape(format!("node {v} outside hop stack of {} nodes", stack.n())));
        }
        data.extend_from_slice(stack.node_tokens(v));
    }
    Tensor::new(&[nodes.len() * seq, stack.width()], data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = ModelParams::init(&config, &mut rng);
        Ok(Self { config, params })
    }

    fn check_stack(&self, stack: &HopStack) -> Result<()> {
        if stack.width() != self.config.d_in || stack.k() != self.config.k {
            return Err(Error::Shape(format!(
                "hop stack is k={} width={}, model expects k={} width={}",
                stack.k(),
                stack.width(),
                self.config.k,
                self.config.d_in
            )));
        }
        Ok(())
    }

    /// Inference logits [B, 2] for `nodes`, dropout disabled.
    pub fn logits(&self, stack: &HopStack, nodes: &[usize]) -> Result<Tensor> {
        Ok(self.logits_with_trace(stack, nodes)?.0)
    }

    /// Logits plus the attention weights of every layer and head and the
    /// readout weights.
    pub fn logits_with_trace(&self, stack: &HopStack, nodes: &[usize]) -> Result<(Tensor, Vec<Vec<Tensor>>, Tensor)> {
        self.check_stack(stack)?;
        let mut tape = Tape::new();
        let w = self.params.map(|t| tape.constant(t.clone()));
        let x = tape.constant(token_input(stack, nodes)?);
        let (logits, trace) = forward(&mut tape, &w, x, nodes.len(), &self.config, None)?;
        let out = tape.value(logits).clone();
        if let Some(bad) = out.data().chunks(2).position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("non-finite logits for node {}", nodes[bad])));
        }
        let att = trace
            .attention
            .iter()
            .map(|l| l.iter().map(|&v| tape.value(v).clone()).collect())
            .collect();
        Ok((out, att, tape.value(trace.readout).clone()))
    }

    /// Mean cross-entropy over `nodes` and its gradient for every parameter.
    pub fn loss_and_grads(
        &self,
        stack: &HopStack,
        nodes: &[usize],
        targets: &[usize],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, ModelParams)> {
        self.check_stack(stack)?;
        let mut tape = Tape::new();
        let w = self.params.map(|t| tape.leaf(t.clone()));
        let x = tape.constant(token_input(stack, nodes)?);
        let (logits, _) = forward(&mut tape, &w, x, nodes.len(), &self.config, rng)?;
        let loss = tape.cross_entropy(logits, targets)?;
        tape.backward(loss)?;
        let value = tape.value(loss).data()[0];
        let grads = w.try_map(|&v| {
            tape.grad(v).ok_or_else(|| Error::Autodiff("parameter received no gradient".into()))
        })?;
        Ok((value, grads))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            header: self.config.to_header(),
            tensors: self.params.named().into_iter().map(|(n, t)| (n, t.clone())).collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = ModelConfig::from_header(&ck.header)?;
        let mut template = Model::new(config.clone())?;
        let names: Vec<String> = template.params.named().into_iter().map(|(n, _)| n).collect();
        if names.len() != ck.tensors.len() {
            return Err(Error::Format("checkpoint tensor count does not match its config".into()));
        }
        for (slot, ((name, tensor), want)) in template.params.iter_mut().zip(ck.tensors.iter().zip(&names)) {
            if name != want || slot.shape() != tensor.shape() {
                return Err(Error::Format(format!("checkpoint tensor {name} does not match {want}")));
            }
            *slot = tensor.clone();
        }
        Ok(template)
    }
}
