#![allow(dead_code)]

use fairgt::autodiff::{Tape, Tensor, Var};
use fairgt::hops::{hop_aggregate, HopNorm, HopStack, SensitiveGroupGraph};
use fairgt::linalg::Matrix;
use fairgt::model::{Model, ModelConfig};
use fairgt::Result;
use fairgt_oracles::transformer::{affine, attention_readout, encoder_layer, BlockWeights};
use fairgt_oracles::{fd_gradient, DenseRows};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

pub struct OpCase {
    pub name: &'static str,
    pub shapes: Vec<Vec<usize>>,
    pub build: Build,
}

fn case(name: &'static str, shapes: &[&[usize]], build: impl Fn(&mut Tape, &[Var]) -> Result<Var> + 'static) -> OpCase {
    OpCase {
        name,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        build: Box::new(build),
    }
}

/// One case per differentiable operation.
pub fn op_cases() -> Vec<OpCase> {
    vec![
        case("matmul", &[&[3, 4], &[4, 2]], |t, v| t.matmul(v[0], v[1])),
        case("bmm", &[&[2, 3, 4], &[2, 4, 2]], |t, v| t.bmm(v[0], v[1], false)),
        case("bmm_transposed", &[&[2, 3, 4], &[2, 5, 4]], |t, v| t.bmm(v[0], v[1], true)),
        case("add", &[&[3, 2], &[3, 2]], |t, v| t.add(v[0], v[1])),
        case("add_row_bias", &[&[4, 3], &[3]], |t, v| t.add_row_bias(v[0], v[1])),
        case("mul", &[&[3, 3], &[3, 3]], |t, v| t.mul(v[0], v[1])),
        case("scale", &[&[2, 5]], |t, v| Ok(t.scale(v[0], -1.7))),
        case("softmax", &[&[4, 4]], |t, v| t.softmax(v[0])),
        case("layer_norm", &[&[3, 5], &[5], &[5]], |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5)),
        case("gelu", &[&[3, 4]], |t, v| Ok(t.gelu(v[0]))),
        case("gelu_tanh", &[&[3, 4]], |t, v| {
            t.use_tanh_gelu(true);
            Ok(t.gelu(v[0]))
        }),
        case("reshape", &[&[2, 6]], |t, v| t.reshape(v[0], &[3, 4])),
        case("slice_cols", &[&[3, 5]], |t, v| t.slice_cols(v[0], 1, 4)),
        case("concat_cols", &[&[3, 2], &[3, 3]], |t, v| t.concat_cols(&[v[0], v[1]])),
        case("sum", &[&[3, 3]], |t, v| Ok(t.sum(v[0]))),
        case("mean", &[&[2, 4]], |t, v| Ok(t.mean(v[0]))),
        case("cross_entropy", &[&[5, 2]], |t, v| t.cross_entropy(v[0], &[0, 1, 1, 0, 1])),
        case("dropout", &[&[4, 4]], |t, v| {
            let mut r = ChaCha8Rng::seed_from_u64(77);
            t.dropout(v[0], 0.3, &mut r)
        }),
    ]
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-6)
}

/// Reverse-mode gradient of Σ R ⊙ op(inputs) against central differences,
/// for every input. Returns the worst relative error.
pub fn check_op(c: &OpCase, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Tensor> = c
        .shapes
        .iter()
        .map(|s| {
            let n = s.iter().product();
            Tensor::new(s, (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
        })
        .collect();
    let eval = |vals: &[Tensor], record: bool| -> (f64, Vec<Option<Tensor>>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = (c.build)(&mut tape, &vars).unwrap();
        let mut wr = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let shape = tape.value(out).shape().to_vec();
        let n = tape.value(out).numel();
        let r = tape.constant(Tensor::new(&shape, (0..n).map(|_| wr.random_range(-1.0..1.0)).collect()).unwrap());
        let p = tape.mul(out, r).unwrap();
        let loss = tape.sum(p);
        let value = tape.value(loss).data()[0];
        if record {
            tape.backward(loss).unwrap();
            (value, vars.iter().map(|&v| tape.grad(v)).collect())
        } else {
            (value, Vec::new())
        }
    };
    let (_, grads) = eval(&inputs, true);
    let mut worst = 0.0f64;
    for (idx, g) in grads.iter().enumerate() {
        let g = g.as_ref().expect("every input receives a gradient");
        let fd = fd_gradient(
            |x| {
                let mut vals = inputs.clone();
                vals[idx] = Tensor::new(inputs[idx].shape(), x.to_vec()).unwrap();
                eval(&vals, false).0
            },
            inputs[idx].data(),
            1e-5,
        );
        worst = worst.max(rel_err(g.data(), &fd));
    }
    worst
}

/// 5 nodes, k = 2, d_hidden = 8, group-mean hops of random features.
pub fn tiny_model_fixture(seed: u64, heads: usize, dropout: f64) -> (Model, HopStack, Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 5;
    let s = [1u8, 0, 1, 1, 0];
    let mut x = Matrix::zeros(n, 4);
    for i in 0..n {
        x.set(i, 0, s[i] as f64);
        for j in 1..4 {
            x.set(i, j, rng.random_range(-1.0..1.0));
        }
    }
    let sg = SensitiveGroupGraph::from_sensitive(&s).unwrap();
    let stack = hop_aggregate(&sg, &x, 2, HopNorm::GroupMean).unwrap();
    let mut cfg = ModelConfig::new(4, 2, 0);
    cfg.d_hidden = 8;
    cfg.heads = heads;
    cfg.dropout = dropout;
    cfg.seed = seed;
    let mut model = Model::new(cfg).unwrap();
    // Non-trivial biases and gains so their gradients are exercised.
    for t in model.params.iter_mut() {
        if t.shape().len() == 1 {
            for v in t.data_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
    }
    (model, stack, (0..n).collect(), vec![1, 0, 0, 1, 1])
}

/// Worst relative gradient error of the mean cross-entropy over all
/// parameters, and separately over β, the first W_Q and u.
pub fn model_grad_errors(seed: u64) -> (f64, f64) {
    let (model, stack, nodes, targets) = tiny_model_fixture(seed, 2, 0.1);
    let loss_at = |m: &Model| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        m.loss_and_grads(&stack, &nodes, &targets, Some(&mut r)).unwrap()
    };
    let (_, grads) = loss_at(&model);
    let flat = model.params.flatten();
    let fd = fd_gradient(
        |x| {
            let mut m = model.clone();
            m.params.unflatten(x);
            loss_at(&m).0
        },
        &flat,
        1e-5,
    );
    let ad = grads.flatten();
    let names = model.params.names();
    let mut off = 0;
    let mut key = 0.0f64;
    for (name, t) in names.iter().zip(model.params.iter()) {
        let n = t.numel();
        if name == "beta" || name == "layer0.w_q" || name == "readout_u" {
            key = key.max(rel_err(&ad[off..off + n], &fd[off..off + n]));
        }
        off += n;
    }
    (rel_err(&ad, &fd), key)
}

fn rows(t: &Tensor) -> DenseRows {
    t.to_rows()
}

fn vecf(t: &Tensor) -> Vec<f64> {
    t.data().to_vec()
}

/// Independent per-node evaluation of the whole network with the dense
/// transformer oracle.
pub fn oracle_logits(model: &Model, stack: &HopStack, nodes: &[usize]) -> Vec<Vec<f64>> {
    let p = &model.params;
    let cfg = &model.config;
    let blocks: Vec<BlockWeights> = p
        .layers
        .iter()
        .map(|l| BlockWeights {
            ln1_gain: vecf(&l.ln1_gain),
            ln1_bias: vecf(&l.ln1_bias),
            w_q: rows(&l.w_q),
            b_q: vecf(&l.b_q),
            w_k: rows(&l.w_k),
            b_k: vecf(&l.b_k),
            w_v: rows(&l.w_v),
            b_v: vecf(&l.b_v),
            w_o: rows(&l.w_o),
            b_o: vecf(&l.b_o),
            ln2_gain: vecf(&l.ln2_gain),
            ln2_bias: vecf(&l.ln2_bias),
            ffn_w1: rows(&l.ffn_w1),
            ffn_b1: vecf(&l.ffn_b1),
            ffn_w2: rows(&l.ffn_w2),
            ffn_b2: vecf(&l.ffn_b2),
        })
        .collect();
    nodes
        .iter()
        .map(|&v| {
            let tokens: DenseRows = (0..=cfg.k).map(|j| stack.token(v, j).to_vec()).collect();
            let mut t = affine(&tokens, &rows(&p.beta), &vecf(&p.beta_bias));
            for b in &blocks {
                t = encoder_layer(&t, b, cfg.heads);
            }
            let (emb, _) = attention_readout(&t, p.readout_u.data());
            affine(&[emb], &rows(&p.classifier_w), &vecf(&p.classifier_b)).remove(0)
        })
        .collect()
}

pub fn max_abs_dev(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn canonical(mut v: Vec<f64>) -> Vec<f64> {
    if let Some(&f) = v.iter().find(|x| x.abs() > 1e-8) {
        if f < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    v
}

/// Largest deviation between the iterative solver and the dense oracle over
/// the top `t` pairs, after sign canonicalization. Where |λ| values are
/// within 1e-6 of each other the eigenvectors are not unique, so each solver
/// vector is instead measured by its distance from the oracle's cluster span.
pub fn eig_deviation(a: &fairgt::linalg::CsrMatrix, t: usize, seed: u64) -> f64 {
    use fairgt::spectral::{top_magnitude_eigenpairs_of, EigenOptions};
    let opts = EigenOptions { seed, ..Default::default() };
    let basis = top_magnitude_eigenpairs_of(a, t, &opts).unwrap();
    let oracle = fairgt_oracles::dense_eig(&a.to_dense()).unwrap();
    let mags: Vec<f64> = oracle.values.iter().map(|v| v.abs()).collect();
    let n = mags.len();
    let mut dev = 0.0f64;
    for i in 0..t {
        dev = dev.max((basis.eigenvalues[i] - oracle.values[i]).abs());
        let (mut lo, mut hi) = (i, i);
        while lo > 0 && mags[lo - 1] - mags[lo] <= 1e-6 {
            lo -= 1;
        }
        while hi + 1 < n && mags[hi] - mags[hi + 1] <= 1e-6 {
            hi += 1;
        }
        let v = basis.vectors.column(i);
        if lo == hi {
            let want = canonical(oracle.vectors[i].clone());
            for (x, w) in v.iter().zip(&want) {
                dev = dev.max((x - w).abs());
            }
        } else {
            let mut rest = v.clone();
            for o in &oracle.vectors[lo..=hi] {
                let c: f64 = o.iter().zip(&v).map(|(a, b)| a * b).sum();
                rest.iter_mut().zip(o).for_each(|(r, oj)| *r -= c * oj);
            }
            dev = dev.max(rest.iter().map(|x| x * x).sum::<f64>().sqrt());
        }
    }
    dev
}
