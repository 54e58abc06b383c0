//! Reverse-mode autodiff tape.
//!
//! A [`Graph`] records every op applied during one forward pass, with the
//! intermediate values each backward rule needs. Parameters are read in
//! place from a [`ParamStore`]; [`Graph::backward`] returns gradients for
//! every node and every parameter touched.

use std::collections::HashMap;

use super::tensor::{gemm, gemm_strided, Tensor};
use super::NnetError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.entries.push((name.into(), value));
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].1
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|(n, _)| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug)]
pub struct ConvGeom {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.n * self.ho * self.wo
    }
    fn patch(&self) -> usize {
        self.k * self.k * self.cin
    }
}

enum Op {
    Input,
    Param(usize),
    Conv {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    Relu(Var),
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Add(Var, Var),
    AddConst(Var),
    Scale(Var, f64),
    Reshape(Var),
    MeanPool {
        x: Var,
        area: usize,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        pad: usize,
        probs: Vec<f64>,
        count: usize,
    },
    SimLoss {
        a: Var,
        b: Var,
        zero: Vec<bool>,
    },
    WeightedSum(Vec<(Var, f64)>),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<usize, Var>,
    zero_vector_events: usize,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    nodes: Vec<Option<Vec<f64>>>,
    params: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to an input node, if the loss depends on it.
    pub fn of(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].as_deref()
    }

    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params[id.0].as_deref()
    }

    pub fn into_params(self) -> Vec<Option<Vec<f64>>> {
        self.params
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(grads: &mut [Option<Vec<f64>>], v: Var, delta: &[f64]) {
    let g = acc(grads, v, delta.len());
    for (a, d) in g.iter_mut().zip(delta) {
        *a += d;
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            zero_vector_events: 0,
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0] {
            Node { value: Some(t), .. } => t,
            Node { op: Op::Param(i), .. } => self.params.get(ParamId(*i)),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// Number of zero-norm rows seen by [`Graph::sim_loss`].
    pub fn zero_vector_events(&self) -> usize {
        self.zero_vector_events
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id.0) {
            return *v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id.0),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id.0, v);
        v
    }

    /// NHWC convolution with square kernel; `w` is `[k*k*cin, cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, k: usize, stride: usize, pad: usize) -> Var {
        let xs = self.shape(x);
        assert_eq!(xs.len(), 4, "conv2d expects NHWC input");
        let (n, h, wd, cin) = (xs[0], xs[1], xs[2], xs[3]);
        let cout = self.value(w).last_dim();
        assert_eq!(self.value(w).len(), k * k * cin * cout, "conv weight shape");
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let geom = ConvGeom {
            n,
            h,
            w: wd,
            cin,
            cout,
            k,
            stride,
            pad,
            ho,
            wo,
        };
        let xd = self.value(x).data();
        let (rows, patch) = (geom.rows(), geom.patch());
        let mut cols = vec![0.0; rows * patch];
        for ni in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    let r = (ni * ho + oy) * wo + ox;
                    let row = &mut cols[r * patch..(r + 1) * patch];
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            let src = ((ni * h + iy as usize) * wd + ix as usize) * cin;
                            let dst = (ky * k + kx) * cin;
                            row[dst..dst + cin].copy_from_slice(&xd[src..src + cin]);
                        }
                    }
                }
            }
        }
        let bias = self.value(b).data();
        let mut out = Vec::with_capacity(rows * cout);
        for _ in 0..rows {
            out.extend_from_slice(bias);
        }
        gemm(
            rows,
            patch,
            cout,
            &cols,
            false,
            self.value(w).data(),
            false,
            &mut out,
            1.0,
        );
        let t = Tensor::new(vec![n, ho, wo, cout], out).expect("conv output");
        self.push(t, Op::Conv { x, w, b, geom, cols })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out: Vec<f64> = t.data().iter().map(|&v| v.max(0.0)).collect();
        let t = Tensor::new(t.shape().to_vec(), out).unwrap();
        self.push(t, Op::Relu(x))
    }

    /// 2×2 max pooling with stride 2; first maximum wins ties.
    pub fn max_pool2(&mut self, x: Var) -> Var {
        let xs = self.shape(x).to_vec();
        let (n, h, w, c) = (xs[0], xs[1], xs[2], xs[3]);
        let (ho, wo) = (h / 2, w / 2);
        let xd = self.value(x).data();
        let mut out = vec![0.0; n * ho * wo * c];
        let mut argmax = vec![0usize; out.len()];
        for ni in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    for ci in 0..c {
                        let o = ((ni * ho + oy) * wo + ox) * c + ci;
                        let mut best = f64::NEG_INFINITY;
                        let mut bi = 0;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let i = ((ni * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ci;
                                if xd[i] > best {
                                    best = xd[i];
                                    bi = i;
                                }
                            }
                        }
                        out[o] = best;
                        argmax[o] = bi;
                    }
                }
            }
        }
        let t = Tensor::new(vec![n, ho, wo, c], out).unwrap();
        self.push(t, Op::MaxPool { x, argmax })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "add shape mismatch");
        let out: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(ta.shape().to_vec(), out).unwrap();
        self.push(t, Op::Add(a, b))
    }

    /// Adds a constant whose length divides the input, broadcast over leading rows.
    pub fn add_const(&mut self, x: Var, c: &[f64]) -> Var {
        let t = self.value(x);
        assert!(!c.is_empty() && t.len().is_multiple_of(c.len()), "add_const broadcast");
        let out: Vec<f64> = t.data().iter().enumerate().map(|(i, v)| v + c[i % c.len()]).collect();
        let t = Tensor::new(t.shape().to_vec(), out).unwrap();
        self.push(t, Op::AddConst(x))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let t = self.value(x);
        let out: Vec<f64> = t.data().iter().map(|v| v * s).collect();
        let t = Tensor::new(t.shape().to_vec(), out).unwrap();
        self.push(t, Op::Scale(x, s))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let t = self.value(x).clone().reshaped(shape).expect("reshape");
        self.push(t, Op::Reshape(x))
    }

    /// `[N,H,W,C] → [N,C]` spatial mean.
    pub fn mean_pool(&mut self, x: Var) -> Var {
        let xs = self.shape(x).to_vec();
        let (n, area, c) = (xs[0], xs[1] * xs[2], xs[3]);
        let xd = self.value(x).data();
        let mut out = vec![0.0; n * c];
        for ni in 0..n {
            for p in 0..area {
                let src = &xd[(ni * area + p) * c..(ni * area + p + 1) * c];
                for (o, v) in out[ni * c..(ni + 1) * c].iter_mut().zip(src) {
                    *o += v;
                }
            }
        }
        let inv = 1.0 / area as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        let t = Tensor::new(vec![n, c], out).unwrap();
        self.push(t, Op::MeanPool { x, area })
    }

    /// `x[..., in] · w[in, out] + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        self.linear_impl(x, w, Some(b))
    }

    /// `x[..., in] · w[in, out]`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Var {
        self.linear_impl(x, w, None)
    }

    fn linear_impl(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let xt = self.value(x);
        let wt = self.value(w);
        let (din, dout) = (wt.shape()[0], wt.shape()[1]);
        assert_eq!(xt.last_dim(), din, "linear input width");
        let rows = xt.len() / din;
        let mut out = match b {
            Some(b) => self.value(b).data().repeat(rows),
            None => vec![0.0; rows * dout],
        };
        gemm(rows, din, dout, xt.data(), false, wt.data(), false, &mut out, 1.0);
        let mut shape = xt.shape().to_vec();
        *shape.last_mut().unwrap() = dout;
        let t = Tensor::new(shape, out).unwrap();
        self.push(t, Op::Linear { x, w, b })
    }

    /// Rows of `table[V, D]` selected by `ids`, shaped `[ids.len(), D]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, NnetError> {
        let tt = self.value(table);
        let (v, d) = (tt.shape()[0], tt.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            if i >= v {
                return Err(NnetError::TokenOutOfVocab { token: i, vocab: v });
            }
            out.extend_from_slice(tt.row(i));
        }
        let t = Tensor::new(vec![ids.len(), d], out).unwrap();
        Ok(self.push(
            t,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xt = self.value(x);
        let d = xt.last_dim();
        let rows = xt.len() / d;
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![0.0; xt.len()];
        let mut xhat = vec![0.0; xt.len()];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let row = &xt.data()[r * d..(r + 1) * d];
            let mu = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let xh = (row[j] - mu) * rs;
                xhat[r * d + j] = xh;
                out[r * d + j] = g[j] * xh + b[j];
            }
        }
        let t = Tensor::new(xt.shape().to_vec(), out).unwrap();
        self.push(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        )
    }

    /// Multi-head scaled dot-product attention over `[B,T,D]` projections.
    /// `causal` masks keys after the query position (requires `Tq == Tk`).
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, causal: bool) -> Var {
        let qs = self.shape(q).to_vec();
        let ks = self.shape(k).to_vec();
        let (b, tq, d) = (qs[0], qs[1], qs[2]);
        let tk = ks[1];
        assert_eq!(d % heads, 0, "model width must divide into heads");
        assert!(!causal || tq == tk, "causal attention needs square scores");
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut probs = vec![0.0; b * heads * tq * tk];
        let mut out = vec![0.0; b * tq * d];
        for bi in 0..b {
            for h in 0..heads {
                let p_off = (bi * heads + h) * tq * tk;
                let q_off = bi * tq * d + h * dh;
                let k_off = bi * tk * d + h * dh;
                let p = &mut probs[p_off..p_off + tq * tk];
                gemm_strided(
                    tq,
                    dh,
                    tk,
                    &qd[q_off..],
                    d as isize,
                    1,
                    &kd[k_off..],
                    1,
                    d as isize,
                    p,
                    tk as isize,
                    1,
                    0.0,
                );
                for i in 0..tq {
                    let row = &mut p[i * tk..(i + 1) * tk];
                    let lim = if causal { i + 1 } else { tk };
                    let mut mx = f64::NEG_INFINITY;
                    for s in row[..lim].iter_mut() {
                        *s *= scale;
                        mx = mx.max(*s);
                    }
                    let mut z = 0.0;
                    for s in row[..lim].iter_mut() {
                        *s = (*s - mx).exp();
                        z += *s;
                    }
                    for s in row[..lim].iter_mut() {
                        *s /= z;
                    }
                    row[lim..].iter_mut().for_each(|s| *s = 0.0);
                }
                gemm_strided(
                    tq,
                    tk,
                    dh,
                    p,
                    tk as isize,
                    1,
                    &vd[k_off..],
                    d as isize,
                    1,
                    &mut out[q_off..],
                    d as isize,
                    1,
                    0.0,
                );
            }
        }
        let t = Tensor::new(vec![b, tq, d], out).unwrap();
        self.push(t, Op::Attention { q, k, v, heads, probs })
    }

    /// Mean token cross-entropy over positions whose target is not `pad`.
    /// Zero when every position is padding.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], pad: usize) -> Var {
        let lt = self.value(logits);
        let vocab = lt.last_dim();
        assert_eq!(lt.len() / vocab, targets.len(), "one target per logit row");
        let mut probs = vec![0.0; lt.len()];
        let mut total = 0.0;
        let mut count = 0;
        for (r, &t) in targets.iter().enumerate() {
            let row = lt.row(r);
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            let lse = mx + z.ln();
            for (p, v) in probs[r * vocab..(r + 1) * vocab].iter_mut().zip(row) {
                *p = (v - lse).exp();
            }
            if t != pad {
                total += lse - row[t];
                count += 1;
            }
        }
        let loss = if count > 0 { total / count as f64 } else { 0.0 };
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                pad,
                probs,
                count,
            },
        )
    }

    /// Mean over rows of `1 - cos(a_i, b_i)`. A zero-norm row contributes 1
    /// with zero gradient and is counted in [`Graph::zero_vector_events`].
    pub fn sim_loss(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "sim_loss shape mismatch");
        let d = ta.last_dim();
        let rows = ta.len() / d;
        let mut zero = vec![false; rows];
        let mut total = 0.0;
        for r in 0..rows {
            let (x, y) = (ta.row(r), tb.row(r));
            let (na, nb) = (norm(x), norm(y));
            if na == 0.0 || nb == 0.0 {
                zero[r] = true;
                total += 1.0;
            } else {
                total += 1.0 - dot(x, y) / (na * nb);
            }
        }
        let events = zero.iter().filter(|&&z| z).count();
        self.zero_vector_events += events;
        if events > 0 {
            log::warn!("sim_loss: {events} zero-norm feature row(s); counted as cosine 0");
        }
        self.push(Tensor::scalar(total / rows as f64), Op::SimLoss { a, b, zero })
    }

    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let v: f64 = terms.iter().map(|(t, w)| w * self.value(*t).item()).sum();
        self.push(Tensor::scalar(v), Op::WeightedSum(terms.to_vec()))
    }

    /// Hash of every ReLU on/off pattern and max-pool winner. Two forward
    /// passes with equal signatures lie on the same smooth piece.
    pub fn kink_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| h = (h ^ v).wrapping_mul(0x100_0000_01b3);
        for node in &self.nodes {
            match &node.op {
                Op::Relu(_) => {
                    for v in node.value.as_ref().unwrap().data() {
                        mix((*v > 0.0) as u64);
                    }
                }
                Op::MaxPool { argmax, .. } => argmax.iter().for_each(|&i| mix(i as u64)),
                _ => {}
            }
        }
        h
    }

    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward from a scalar");
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut pgrads: Vec<Option<Vec<f64>>> = (0..self.params.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(gout) = grads[i].take() else { continue };
            let len_of = |v: Var| self.value(v).len();
            match &self.nodes[i].op {
                Op::Input => grads[i] = Some(gout),
                Op::Param(p) => {
                    let g = pgrads[*p].get_or_insert_with(|| vec![0.0; gout.len()]);
                    g.iter_mut().zip(&gout).for_each(|(a, d)| *a += d);
                }
                Op::Conv { x, w, b, geom, cols } => {
                    let (rows, patch, cout) = (geom.rows(), geom.patch(), geom.cout);
                    gemm(
                        patch,
                        rows,
                        cout,
                        cols,
                        true,
                        &gout,
                        false,
                        acc(&mut grads, *w, patch * cout),
                        1.0,
                    );
                    let gb = acc(&mut grads, *b, cout);
                    for r in 0..rows {
                        for (a, d) in gb.iter_mut().zip(&gout[r * cout..(r + 1) * cout]) {
                            *a += d;
                        }
                    }
                    let mut dcols = vec![0.0; rows * patch];
                    gemm(
                        rows,
                        cout,
                        patch,
                        &gout,
                        false,
                        self.value(*w).data(),
                        true,
                        &mut dcols,
                        0.0,
                    );
                    let gx = acc(&mut grads, *x, len_of(*x));
                    col2im(&dcols, geom, gx);
                }
                Op::Relu(x) => {
                    let out = self.nodes[i].value.as_ref().unwrap().data();
                    let gx = acc(&mut grads, *x, out.len());
                    for ((a, d), o) in gx.iter_mut().zip(&gout).zip(out) {
                        if *o > 0.0 {
                            *a += d;
                        }
                    }
                }
                Op::MaxPool { x, argmax } => {
                    let gx = acc(&mut grads, *x, len_of(*x));
                    for (d, &src) in gout.iter().zip(argmax) {
                        gx[src] += d;
                    }
                }
                Op::Add(a, b) => {
                    add_into(&mut grads, *a, &gout);
                    add_into(&mut grads, *b, &gout);
                }
                Op::AddConst(x) | Op::Reshape(x) => add_into(&mut grads, *x, &gout),
                Op::Scale(x, s) => {
                    let gx = acc(&mut grads, *x, gout.len());
                    gx.iter_mut().zip(&gout).for_each(|(a, d)| *a += s * d);
                }
                Op::MeanPool { x, area } => {
                    let c = self.value(*x).last_dim();
                    let n = gout.len() / c;
                    let inv = 1.0 / *area as f64;
                    let gx = acc(&mut grads, *x, n * area * c);
                    for ni in 0..n {
                        for p in 0..*area {
                            let dst = &mut gx[(ni * area + p) * c..(ni * area + p + 1) * c];
                            for (a, d) in dst.iter_mut().zip(&gout[ni * c..(ni + 1) * c]) {
                                *a += d * inv;
                            }
                        }
                    }
                }
                Op::Linear { x, w, b } => {
                    let wt = self.value(*w);
                    let (din, dout) = (wt.shape()[0], wt.shape()[1]);
                    let rows = gout.len() / dout;
                    gemm(
                        din,
                        rows,
                        dout,
                        self.value(*x).data(),
                        true,
                        &gout,
                        false,
                        acc(&mut grads, *w, din * dout),
                        1.0,
                    );
                    if let Some(b) = b {
                        let gb = acc(&mut grads, *b, dout);
                        for r in 0..rows {
                            for (a, d) in gb.iter_mut().zip(&gout[r * dout..(r + 1) * dout]) {
                                *a += d;
                            }
                        }
                    }
                    gemm(
                        rows,
                        dout,
                        din,
                        &gout,
                        false,
                        wt.data(),
                        true,
                        acc(&mut grads, *x, rows * din),
                        1.0,
                    );
                }
                Op::Embedding { table, ids } => {
                    let tt = self.value(*table);
                    let d = tt.last_dim();
                    let gt = acc(&mut grads, *table, tt.len());
                    for (r, &id) in ids.iter().enumerate() {
                        for (a, g) in gt[id * d..(id + 1) * d].iter_mut().zip(&gout[r * d..(r + 1) * d]) {
                            *a += g;
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let g = self.value(*gamma).data();
                    let d = g.len();
                    let rows = gout.len() / d;
                    let mut gg = vec![0.0; d];
                    let mut gbeta = vec![0.0; d];
                    let mut gx = vec![0.0; gout.len()];
                    for r in 0..rows {
                        let dy = &gout[r * d..(r + 1) * d];
                        let xh = &xhat[r * d..(r + 1) * d];
                        let mut m1 = 0.0;
                        let mut m2 = 0.0;
                        for j in 0..d {
                            let dxh = dy[j] * g[j];
                            m1 += dxh;
                            m2 += dxh * xh[j];
                            gg[j] += dy[j] * xh[j];
                            gbeta[j] += dy[j];
                        }
                        m1 /= d as f64;
                        m2 /= d as f64;
                        for j in 0..d {
                            gx[r * d + j] = rstd[r] * (dy[j] * g[j] - m1 - xh[j] * m2);
                        }
                    }
                    add_into(&mut grads, *gamma, &gg);
                    add_into(&mut grads, *beta, &gbeta);
                    add_into(&mut grads, *x, &gx);
                }
                Op::Attention { q, k, v, heads, probs } => {
                    let qs = self.shape(*q);
                    let (b, tq, d) = (qs[0], qs[1], qs[2]);
                    let tk = self.shape(*k)[1];
                    let dh = d / heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let (qd, kd, vd) = (self.value(*q).data(), self.value(*k).data(), self.value(*v).data());
                    let mut gq = vec![0.0; qd.len()];
                    let mut gk = vec![0.0; kd.len()];
                    let mut gv = vec![0.0; vd.len()];
                    let mut dp = vec![0.0; tq * tk];
                    for bi in 0..b {
                        for h in 0..*heads {
                            let p_off = (bi * heads + h) * tq * tk;
                            let p = &probs[p_off..p_off + tq * tk];
                            let q_off = bi * tq * d + h * dh;
                            let k_off = bi * tk * d + h * dh;
                            let go = &gout[q_off..];
                            // dP = dO · Vᵀ
                            gemm_strided(
                                tq,
                                dh,
                                tk,
                                go,
                                d as isize,
                                1,
                                &vd[k_off..],
                                1,
                                d as isize,
                                &mut dp,
                                tk as isize,
                                1,
                                0.0,
                            );
                            // dV += Pᵀ · dO
                            gemm_strided(
                                tk,
                                tq,
                                dh,
                                p,
                                1,
                                tk as isize,
                                go,
                                d as isize,
                                1,
                                &mut gv[k_off..],
                                d as isize,
                                1,
                                1.0,
                            );
                            for r in 0..tq {
                                let pr = &p[r * tk..(r + 1) * tk];
                                let dr = &mut dp[r * tk..(r + 1) * tk];
                                let dotp: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                                for (dv, pv) in dr.iter_mut().zip(pr) {
                                    *dv = pv * (*dv - dotp) * scale;
                                }
                            }
                            // dQ += dS · K ; dK += dSᵀ · Q
                            gemm_strided(
                                tq,
                                tk,
                                dh,
                                &dp,
                                tk as isize,
                                1,
                                &kd[k_off..],
                                d as isize,
                                1,
                                &mut gq[q_off..],
                                d as isize,
                                1,
                                1.0,
                            );
                            gemm_strided(
                                tk,
                                tq,
                                dh,
                                &dp,
                                1,
                                tk as isize,
                                &qd[q_off..],
                                d as isize,
                                1,
                                &mut gk[k_off..],
                                d as isize,
                                1,
                                1.0,
                            );
                        }
                    }
                    add_into(&mut grads, *q, &gq);
                    add_into(&mut grads, *k, &gk);
                    add_into(&mut grads, *v, &gv);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    pad,
                    probs,
                    count,
                } => {
                    let vocab = self.value(*logits).last_dim();
                    let gl = acc(&mut grads, *logits, probs.len());
                    if *count > 0 {
                        let s = gout[0] / *count as f64;
                        for (r, &t) in targets.iter().enumerate() {
                            if t == *pad {
                                continue;
                            }
                            let row = &mut gl[r * vocab..(r + 1) * vocab];
                            for (a, p) in row.iter_mut().zip(&probs[r * vocab..(r + 1) * vocab]) {
                                *a += s * p;
                            }
                            row[t] -= s;
                        }
                    }
                }
                Op::SimLoss { a, b, zero } => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let d = ta.last_dim();
                    let s = gout[0] / zero.len() as f64;
                    let mut ga = vec![0.0; ta.len()];
                    let mut gb = vec![0.0; tb.len()];
                    for (r, &z) in zero.iter().enumerate() {
                        if z {
                            continue;
                        }
                        let (x, y) = (ta.row(r), tb.row(r));
                        let (na, nb) = (norm(x), norm(y));
                        let cos = dot(x, y) / (na * nb);
                        for j in 0..d {
                            ga[r * d + j] = -s * (y[j] / (na * nb) - cos * x[j] / (na * na));
                            gb[r * d + j] = -s * (x[j] / (na * nb) - cos * y[j] / (nb * nb));
                        }
                    }
                    add_into(&mut grads, *a, &ga);
                    add_into(&mut grads, *b, &gb);
                }
                Op::WeightedSum(terms) => {
                    for (t, w) in terms {
                        add_into(&mut grads, *t, &[w * gout[0]]);
                    }
                }
            }
        }
        Gradients {
            nodes: grads,
            params: pgrads,
        }
    }
}

fn col2im(dcols: &[f64], g: &ConvGeom, gx: &mut [f64]) {
    let patch = g.patch();
    for ni in 0..g.n {
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let r = (ni * g.ho + oy) * g.wo + ox;
                let row = &dcols[r * patch..(r + 1) * patch];
                for ky in 0..g.k {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..g.k {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        let dst = ((ni * g.h + iy as usize) * g.w + ix as usize) * g.cin;
                        let src = (ky * g.k + kx) * g.cin;
                        for c in 0..g.cin {
                            gx[dst + c] += row[src + c];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
