use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::autodiff::Tensor;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub ln1_gain: T,
    pub ln1_bias: T,
    pub w_q: T,
    pub b_q: T,
    pub w_k: T,
    pub b_k: T,
    pub w_v: T,
    pub b_v: T,
    pub w_o: T,
    pub b_o: T,
    pub ln2_gain: T,
    pub ln2_bias: T,
    pub ffn_w1: T,
    pub ffn_b1: T,
    pub ffn_w2: T,
    pub ffn_b2: T,
}

const LAYER_NAMES: [&str; 16] = [
    "ln1_gain", "ln1_bias", "w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o", "ln2_gain",
    "ln2_bias", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2",
];

impl<T> LayerWeights<T> {
    fn refs(&self) -> [&T; 16] {
        [
            &self.ln1_gain, &self.ln1_bias, &self.w_q, &self.b_q, &self.w_k, &self.b_k, &self.w_v,
            &self.b_v, &self.w_o, &self.b_o, &self.ln2_gain, &self.ln2_bias, &self.ffn_w1,
            &self.ffn_b1, &self.ffn_w2, &self.ffn_b2,
        ]
    }

    fn refs_mut(&mut self) -> [&mut T; 16] {
        [
            &mut self.ln1_gain, &mut self.ln1_bias, &mut self.w_q, &mut self.b_q, &mut self.w_k,
            &mut self.b_k, &mut self.w_v, &mut self.b_v, &mut self.w_o, &mut self.b_o,
            &mut self.ln2_gain, &mut self.ln2_bias, &mut self.ffn_w1, &mut self.ffn_b1,
            &mut self.ffn_w2, &mut self.ffn_b2,
        ]
    }

    fn from_fn<E>(mut f: impl FnMut(&'static str) -> std::result::Result<T, E>) -> std::result::Result<Self, E> {
        Ok(Self {
            ln1_gain: f("ln1_gain")?,
            ln1_bias: f("ln1_bias")?,
            w_q: f("w_q")?,
            b_q: f("b_q")?,
            w_k: f("w_k")?,
            b_k: f("b_k")?,
            w_v: f("w_v")?,
            b_v: f("b_v")?,
            w_o: f("w_o")?,
            b_o: f("b_o")?,
            ln2_gain: f("ln2_gain")?,
            ln2_bias: f("ln2_bias")?,
            ffn_w1: f("ffn_w1")?,
            ffn_b1: f("ffn_b1")?,
            ffn_w2: f("ffn_w2")?,
            ffn_b2: f("ffn_b2")?,
        })
    }
}

/// Every model parameter, generic over storage so the same layout serves
/// tensors, tape handles and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    /// Token projection, d′ × d_hidden.
    pub beta: T,
    pub beta_bias: T,
    pub layers: Vec<LayerWeights<T>>,
    /// Readout query, d_hidden.
    pub readout_u: T,
    /// d_hidden × 2.
    pub classifier_w: T,
    pub classifier_b: T,
}

pub type ModelParams = Weights<Tensor>;

impl<T> Weights<T> {
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let head = [&self.beta, &self.beta_bias];
        let tail = [&self.readout_u, &self.classifier_w, &self.classifier_b];
        head.into_iter()
            .chain(self.layers.iter().flat_map(|l| l.refs()))
            .chain(tail)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        let head = [&mut self.beta, &mut self.beta_bias];
        let tail = [&mut self.readout_u, &mut self.classifier_w, &mut self.classifier_b];
        head.into_iter()
            .chain(self.layers.iter_mut().flat_map(|l| l.refs_mut()))
            .chain(tail)
    }

    /// Parameter names in iteration order, e.g. `layer0.w_q`.
    pub fn names(&self) -> Vec<String> {
        let mut v = vec!["beta".to_string(), "beta_bias".to_string()];
        for l in 0..self.layers.len() {
            v.extend(LAYER_NAMES.iter().map(|n| format!("layer{l}.{n}")));
        }
        v.extend(["readout_u", "classifier_w", "classifier_b"].map(String::from));
        v
    }

    pub fn named(&self) -> Vec<(String, &T)> {
        self.names().into_iter().zip(self.iter()).collect()
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Weights<U> {
        self.try_map(|t| Ok::<U, std::convert::Infallible>(f(t))).unwrap_or_else(|e| match e {})
    }

    pub fn try_map<U, E>(&self, mut f: impl FnMut(&T) -> std::result::Result<U, E>) -> std::result::Result<Weights<U>, E> {
        let beta = f(&self.beta)?;
        let beta_bias = f(&self.beta_bias)?;
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let refs = l.refs();
                let mut i = 0;
                LayerWeights::from_fn(|_| {
                    i += 1;
                    f(refs[i - 1])
                })
            })
            .collect::<std::result::Result<_, E>>()?;
        Ok(Weights {
            beta,
            beta_bias,
            layers,
            readout_u: f(&self.readout_u)?,
            classifier_w: f(&self.classifier_w)?,
            classifier_b: f(&self.classifier_b)?,
        })
    }
}

fn uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-bound..bound)).collect()).unwrap()
}

impl ModelParams {
    /// Weights uniform in ±1/√fan_in, biases zero, layer-norm gains one.
    pub fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let (d, h, ff) = (cfg.d_in, cfg.d_hidden, cfg.d_ff());
        let beta = uniform(&[d, h], d, rng);
        let layers = (0..cfg.layers)
            .map(|_| {
                let r: Result<LayerWeights<Tensor>> = LayerWeights::from_fn(|name| {
                    Ok(match name {
                        "ln1_gain" | "ln2_gain" => Tensor::filled(&[h], 1.0),
                        "w_q" | "w_k" | "w_v" | "w_o" => uniform(&[h, h], h, rng),
                        "ffn_w1" => uniform(&[h, ff], h, rng),
                        "ffn_w2" => uniform(&[ff, h], ff, rng),
                        "ffn_b1" => Tensor::zeros(&[ff]),
                        _ => Tensor::zeros(&[h]),
                    })
                });
                r.expect("infallible")
            })
            .collect();
        Self {
            beta,
            beta_bias: Tensor::zeros(&[h]),
            layers,
            readout_u: uniform(&[h], h, rng),
            classifier_w: uniform(&[h, 2], h, rng),
            classifier_b: Tensor::zeros(&[2]),
        }
    }

    pub fn num_values(&self) -> usize {
        self.iter().map(Tensor::numel).sum()
    }

    /// All values concatenated in iteration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        let mut off = 0;
        for t in self.iter_mut() {
            let n = t.numel();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }
}
