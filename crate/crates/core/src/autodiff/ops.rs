use rand::Rng;

use super::{Op, Tape, Tensor, Var};
use crate::error::{Error, Result};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// C = op(A)·op(B) + beta·C with A logically m×k and B logically k×n.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: strides describe the m×k, k×n and m×n row-major buffers whose
    // lengths were checked by the callers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn gelu_parts(x: f64, tanh: bool) -> (f64, f64) {
    if tanh {
        let u = SQRT_2_OVER_PI * (x + 0.044715 * x * x * x);
        let t = u.tanh();
        let du = SQRT_2_OVER_PI * (1.0 + 3.0 * 0.044715 * x * x);
        (0.5 * x * (1.0 + t), 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
    } else {
        let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
        let pdf = INV_SQRT_2PI * (-0.5 * x * x).exp();
        (x * cdf, cdf + x * pdf)
    }
}

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

impl Tape {
    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.node(v).requires_grad)
    }

    fn dims2(&self, v: Var, op: &str) -> Result<(usize, usize)> {
        match self.value(v).shape() {
            &[r, c] => Ok((r, c)),
            s => Err(Error::Shape(format!("{op}: expected a matrix, got shape {s:?}"))),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, p) = self.dims2(a, "matmul")?;
        let (p2, q) = self.dims2(b, "matmul")?;
        if p != p2 {
            return Err(shape_err("matmul", self.value(a).shape(), self.value(b).shape()));
        }
        let mut out = vec![0.0; m * q];
        gemm(m, p, q, self.value(a).data(), false, self.value(b).data(), false, 0.0, &mut out);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor { shape: vec![m, q], data: out }, rg, Op::MatMul(a, b)))
    }

    /// Batched product over the leading axis: [B,m,p]·[B,p,q], or [B,m,p]·[B,q,p]ᵀ.
    pub fn bmm(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        let (&[ba, m, p], &[bb, x, y]) = (sa.as_slice(), sb.as_slice()) else {
            return Err(shape_err("bmm", &sa, &sb));
        };
        let (p2, q) = if transpose_b { (y, x) } else { (x, y) };
        if ba != bb || p != p2 {
            return Err(shape_err("bmm", &sa, &sb));
        }
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; ba * m * q];
        for bi in 0..ba {
            let ab = &ad[bi * m * p..(bi + 1) * m * p];
            let bbm = &bd[bi * p * q..(bi + 1) * p * q];
            let ob = &mut out[bi * m * q..(bi + 1) * m * q];
            for i in 0..m {
                for j in 0..q {
                    let mut acc = 0.0;
                    for t in 0..p {
                        let bv = if transpose_b { bbm[j * p + t] } else { bbm[t * q + j] };
                        acc += ab[i * p + t] * bv;
                    }
                    ob[i * q + j] = acc;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            Tensor { shape: vec![ba, m, q], data: out },
            rg,
            Op::Bmm { a, b, transpose_b },
        ))
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err(op, self.value(a).shape(), self.value(b).shape()));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let shape = self.value(a).shape().to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor { shape, data }, rg, Op::Add(a, b)))
    }

    /// Adds `bias` (shape [d]) to every slice along the last axis of `x`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let d = self.value(x).last_dim();
        if self.value(bias).shape() != [d] {
            return Err(shape_err("add_row_bias", self.value(x).shape(), self.value(bias).shape()));
        }
        let b = self.value(bias).data();
        let data = self
            .value(x)
            .data()
            .chunks(d)
            .flat_map(|row| row.iter().zip(b).map(|(v, c)| v + c))
            .collect();
        let shape = self.value(x).shape().to_vec();
        let rg = self.rg(&[x, bias]);
        Ok(self.push(Tensor { shape, data }, rg, Op::AddRowBias(x, bias)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let shape = self.value(a).shape().to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor { shape, data }, rg, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x);
        let out = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|v| v * c).collect(),
        };
        let rg = self.rg(&[x]);
        self.push(out, rg, Op::Scale(x, c))
    }

    /// Softmax along the last axis with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if !t.is_finite() {
            return Err(Error::NonFinite("softmax input contains NaN or infinity".into()));
        }
        let d = t.last_dim();
        let mut data = Vec::with_capacity(t.numel());
        for row in t.data().chunks(d) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let start = data.len();
            let mut z = 0.0;
            for v in row {
                let e = (v - mx).exp();
                z += e;
                data.push(e);
            }
            data[start..].iter_mut().for_each(|e| *e /= z);
        }
        let shape = t.shape().to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor { shape, data }, rg, Op::Softmax(x)))
    }

    /// Normalizes along the last axis, then applies `gain` and `bias` (both [d]).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let d = self.value(x).last_dim();
        if self.value(gain).shape() != [d] || self.value(bias).shape() != [d] {
            return Err(shape_err("layer_norm", self.value(x).shape(), self.value(gain).shape()));
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let t = self.value(x);
        let rows = t.numel() / d.max(1);
        let mut xhat = Vec::with_capacity(t.numel());
        let mut inv_std = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(t.numel());
        for row in t.data().chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            for (j, v) in row.iter().enumerate() {
                let xh = (v - mean) * inv;
                xhat.push(xh);
                data.push(xh * g[j] + b[j]);
            }
        }
        let shape = t.shape().to_vec();
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(
            Tensor { shape, data },
            rg,
            Op::LayerNorm { x, gain, bias, xhat, inv_std },
        ))
    }

    /// Exact-erf GELU unless the tape was switched to the tanh form.
    pub fn gelu(&mut self, x: Var) -> Var {
        let tanh = self.tanh_gelu;
        let t = self.value(x);
        let out = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| gelu_parts(v, tanh).0).collect(),
        };
        let rg = self.rg(&[x]);
        self.push(out, rg, Op::Gelu { x, tanh })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if shape.iter().product::<usize>() != t.numel() {
            return Err(shape_err("reshape", t.shape(), shape));
        }
        let out = Tensor { shape: shape.to_vec(), data: t.data().to_vec() };
        let rg = self.rg(&[x]);
        Ok(self.push(out, rg, Op::Reshape(x)))
    }

    /// Columns start..end of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.dims2(x, "slice_cols")?;
        if start > end || end > c {
            return Err(Error::Shape(format!("slice_cols: range {start}..{end} of {c} columns")));
        }
        let data = self
            .value(x)
            .data()
            .chunks(c.max(1))
            .take(r)
            .flat_map(|row| row[start..end].iter().copied())
            .collect();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor { shape: vec![r, end - start], data }, rg, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let dims: Vec<(usize, usize)> = parts.iter().map(|&p| self.dims2(p, "concat_cols")).collect::<Result<_>>()?;
        let r = dims.first().map_or(0, |d| d.0);
        if dims.iter().any(|d| d.0 != r) {
            return Err(Error::Shape("concat_cols: row counts differ".into()));
        }
        let total: usize = dims.iter().map(|d| d.1).sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &(_, c)) in parts.iter().zip(&dims) {
                data.extend_from_slice(&self.value(p).data()[i * c..(i + 1) * c]);
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(Tensor { shape: vec![r, total], data }, rg, Op::ConcatCols(parts.to_vec())))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), rg, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.numel().max(1) as f64;
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), rg, Op::Mean(x))
    }

    /// Mean softmax cross-entropy of the rows of `logits` against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (m, c) = self.dims2(logits, "cross_entropy")?;
        if targets.len() != m || targets.iter().any(|&t| t >= c) || m == 0 {
            return Err(Error::Shape(format!("cross_entropy: {m}x{c} logits, {} targets", targets.len())));
        }
        let t = self.value(logits);
        if !t.is_finite() {
            return Err(Error::NonFinite("cross_entropy logits contain NaN or infinity".into()));
        }
        let mut probs = Vec::with_capacity(m * c);
        let mut loss = 0.0;
        for (row, &y) in t.data().chunks(c).zip(targets) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            loss -= row[y] - mx - z.ln();
            probs.extend(row.iter().map(|v| (v - mx).exp() / z));
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss / m as f64),
            rg,
            Op::CrossEntropy { logits, targets: targets.to_vec(), probs },
        ))
    }

    /// Inverted dropout: zeroes entries with probability `p` and rescales the
    /// rest by 1/(1−p). `p == 0` returns `x` unchanged.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut impl Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let t = self.value(x);
        let mask: Vec<f64> = (0..t.numel()).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
        let out = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().zip(&mask).map(|(v, m)| v * m).collect(),
        };
        let rg = self.rg(&[x]);
        Ok(self.push(out, rg, Op::Dropout { x, mask }))
    }
}

/// Propagates the gradient `g` of node `i` into its inputs.
pub(crate) fn backprop(tape: &mut Tape, i: usize, g: &[f64]) {
    let node = &tape.nodes[i];
    let val = |v: Var| &tape.nodes[v.0].value;
    let mut out: Vec<(Var, Vec<f64>)> = Vec::with_capacity(2);
    match &node.op {
        Op::Leaf => {}
        &Op::MatMul(a, b) => {
            let (m, p) = (val(a).shape()[0], val(a).shape()[1]);
            let q = val(b).shape()[1];
            if tape.nodes[a.0].requires_grad {
                let mut da = vec![0.0; m * p];
                gemm(m, q, p, g, false, val(b).data(), true, 0.0, &mut da);
                out.push((a, da));
            }
            if tape.nodes[b.0].requires_grad {
                let mut db = vec![0.0; p * q];
                gemm(p, m, q, val(a).data(), true, g, false, 0.0, &mut db);
                out.push((b, db));
            }
        }
        &Op::Bmm { a, b, transpose_b } => {
            let (ba, m, p) = (val(a).shape()[0], val(a).shape()[1], val(a).shape()[2]);
            let q = node.value.shape()[2];
            let (ad, bd) = (val(a).data(), val(b).data());
            let mut da = vec![0.0; ad.len()];
            let mut db = vec![0.0; bd.len()];
            for bi in 0..ba {
                let (ao, bo, go) = (bi * m * p, bi * p * q, bi * m * q);
                for r in 0..m {
                    for c in 0..q {
                        let gv = g[go + r * q + c];
                        if gv == 0.0 {
                            continue;
                        }
                        for t in 0..p {
                            let bidx = if transpose_b { bo + c * p + t } else { bo + t * q + c };
                            da[ao + r * p + t] += gv * bd[bidx];
                            db[bidx] += gv * ad[ao + r * p + t];
                        }
                    }
                }
            }
            out.push((a, da));
            out.push((b, db));
        }
        &Op::Add(a, b) => {
            out.push((a, g.to_vec()));
            out.push((b, g.to_vec()));
        }
        &Op::AddRowBias(x, bias) => {
            let d = val(bias).numel();
            let mut db = vec![0.0; d];
            for row in g.chunks(d) {
                db.iter_mut().zip(row).for_each(|(s, v)| *s += v);
            }
            out.push((x, g.to_vec()));
            out.push((bias, db));
        }
        &Op::Mul(a, b) => {
            out.push((a, g.iter().zip(val(b).data()).map(|(x, y)| x * y).collect()));
            out.push((b, g.iter().zip(val(a).data()).map(|(x, y)| x * y).collect()));
        }
        &Op::Scale(x, c) => out.push((x, g.iter().map(|v| v * c).collect())),
        &Op::Softmax(x) => {
            let d = node.value.last_dim();
            let mut dx = Vec::with_capacity(g.len());
            for (y, gr) in node.value.data().chunks(d).zip(g.chunks(d)) {
                let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                dx.extend(y.iter().zip(gr).map(|(yv, gv)| yv * (gv - dot)));
            }
            out.push((x, dx));
        }
        Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
            let d = val(*gain).numel();
            let gn = val(*gain).data();
            let mut dx = Vec::with_capacity(g.len());
            let mut dg = vec![0.0; d];
            let mut dbias = vec![0.0; d];
            for ((gr, xh), inv) in g.chunks(d).zip(xhat.chunks(d)).zip(inv_std) {
                let mut s1 = 0.0;
                let mut s2 = 0.0;
                for j in 0..d {
                    let dxh = gr[j] * gn[j];
                    s1 += dxh;
                    s2 += dxh * xh[j];
                    dg[j] += gr[j] * xh[j];
                    dbias[j] += gr[j];
                }
                for j in 0..d {
                    let dxh = gr[j] * gn[j];
                    dx.push(inv / d as f64 * (d as f64 * dxh - s1 - xh[j] * s2));
                }
            }
            out.push((*x, dx));
            out.push((*gain, dg));
            out.push((*bias, dbias));
        }
        &Op::Gelu { x, tanh } => {
            out.push((x, g.iter().zip(val(x).data()).map(|(gv, &v)| gv * gelu_parts(v, tanh).1).collect()));
        }
        &Op::Reshape(x) => out.push((x, g.to_vec())),
        &Op::SliceCols { x, start } => {
            let c = val(x).shape()[1];
            let w = node.value.shape()[1];
            let mut dx = vec![0.0; val(x).numel()];
            for (r, gr) in g.chunks(w.max(1)).enumerate().take(node.value.shape()[0]) {
                dx[r * c + start..r * c + start + w].copy_from_slice(gr);
            }
            out.push((x, dx));
        }
        Op::ConcatCols(parts) => {
            let total = node.value.shape()[1];
            let mut off = 0;
            for &p in parts {
                let c = val(p).shape()[1];
                let r = val(p).shape()[0];
                let mut dp = Vec::with_capacity(r * c);
                for row in 0..r {
                    dp.extend_from_slice(&g[row * total + off..row * total + off + c]);
                }
                off += c;
                out.push((p, dp));
            }
        }
        &Op::Sum(x) => out.push((x, vec![g[0]; val(x).numel()])),
        &Op::Mean(x) => {
            let n = val(x).numel();
            out.push((x, vec![g[0] / n as f64; n]));
        }
        Op::CrossEntropy { logits, targets, probs } => {
            let c = val(*logits).shape()[1];
            let m = targets.len() as f64;
            let mut dl: Vec<f64> = probs.iter().map(|p| p * g[0] / m).collect();
            for (r, &y) in targets.iter().enumerate() {
                dl[r * c + y] -= g[0] / m;
            }
            out.push((*logits, dl));
        }
        Op::Dropout { x, mask } => out.push((*x, g.iter().zip(mask).map(|(a, b)| a * b).collect())),
    }
    for (v, d) in out {
        tape.accumulate(v, &d);
    }
}
