//! Twin encoder-decoder: a convolutional encoder with residual blocks and a
//! post-norm transformer decoder, one pair per branch.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::graph::{Graph, ParamId, ParamStore, Var};
use super::optim::Adadelta;
use super::tensor::Tensor;
use super::NnetError;
use crate::glyphgen::{GlyphRaster, GLYPH_SIZE};
use crate::seeding::rng_for;

pub const PAD: usize = 0;

const STROKE_TAG: u64 = 0x5354_524b;
const RADICAL_TAG: u64 = 0x5241_4443;

/// Token space `PAD=0`, labels `1..=labels`, then BOS and EOS.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub labels: usize,
}

impl Vocab {
    pub fn strokes() -> Self {
        Vocab { labels: 5 }
    }
    pub fn bos(self) -> usize {
        self.labels + 1
    }
    pub fn eos(self) -> usize {
        self.labels + 2
    }
    pub fn size(self) -> usize {
        self.labels + 3
    }
    pub fn is_label(self, t: usize) -> bool {
        (1..=self.labels).contains(&t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    StrokeOnly,
    StrokeRadical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub res_blocks: usize,
    pub d_f: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub stroke_max_len: usize,
    pub radical_max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            conv1_channels: 16,
            conv2_channels: 32,
            res_blocks: 4,
            d_f: 64,
            dec_layers: 2,
            heads: 4,
            d_ff: 128,
            stroke_max_len: 24,
            radical_max_len: 16,
        }
    }
}

impl ModelConfig {
    /// Tiny configuration for finite-difference checks.
    pub fn micro() -> Self {
        ModelConfig {
            conv1_channels: 2,
            conv2_channels: 4,
            res_blocks: 1,
            d_f: 8,
            dec_layers: 1,
            heads: 2,
            d_ff: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NnetError> {
        let bad = |m: &str| Err(NnetError::InvalidConfig(m.to_string()));
        if self.conv1_channels == 0 || self.conv2_channels == 0 || self.d_ff == 0 {
            return bad("channel counts must be positive");
        }
        if self.d_f == 0 || !self.d_f.is_multiple_of(4) {
            return bad("d_f must be a positive multiple of 4");
        }
        if self.heads == 0 || !self.d_f.is_multiple_of(self.heads) {
            return bad("heads must divide d_f");
        }
        if self.dec_layers == 0 {
            return bad("at least one decoder layer is required");
        }
        if self.stroke_max_len == 0 || self.radical_max_len == 0 {
            return bad("max_len must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Affine {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Norm {
    g: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    conv1: Affine,
    conv2: Affine,
    blocks: Vec<[Affine; 2]>,
    proj: Affine,
}

#[derive(Clone, Debug, PartialEq)]
struct Attn {
    q: Affine,
    /// Key projection has no bias: softmax is invariant to it.
    k: ParamId,
    v: Affine,
    o: Affine,
}

#[derive(Clone, Debug, PartialEq)]
struct DecoderLayer {
    self_attn: Attn,
    ln1: Norm,
    cross_attn: Attn,
    ln2: Norm,
    ff1: Affine,
    ff2: Affine,
    ln3: Norm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    embed: ParamId,
    layers: Vec<DecoderLayer>,
    out: Affine,
    pub vocab: Vocab,
    pub max_len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

struct Init<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
    prefix: String,
}

impl Init<'_> {
    fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> ParamId {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).expect("positive std");
        let data = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        self.store.add(
            format!("{}.{name}", self.prefix),
            Tensor::new(shape.to_vec(), data).unwrap(),
        )
    }

    fn filled(&mut self, name: &str, shape: &[usize], v: f64) -> ParamId {
        self.store
            .add(format!("{}.{name}", self.prefix), Tensor::filled(shape, v))
    }

    fn conv(&mut self, name: &str, k: usize, cin: usize, cout: usize, gain: f64) -> Affine {
        let std = gain * (2.0 / (k * k * cin) as f64).sqrt();
        let w = self.normal(&format!("{name}.w"), &[k * k * cin, cout], std);
        let b = self.filled(&format!("{name}.b"), &[cout], 0.0);
        Affine { w, b }
    }

    fn linear_weight(&mut self, name: &str, din: usize, dout: usize) -> ParamId {
        let lim = (6.0 / (din + dout) as f64).sqrt();
        let data = (0..din * dout).map(|_| self.rng.gen_range(-lim..lim)).collect();
        self.store.add(
            format!("{}.{name}.w", self.prefix),
            Tensor::new(vec![din, dout], data).unwrap(),
        )
    }

    fn linear(&mut self, name: &str, din: usize, dout: usize) -> Affine {
        let w = self.linear_weight(name, din, dout);
        let b = self.filled(&format!("{name}.b"), &[dout], 0.0);
        Affine { w, b }
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        Norm {
            g: self.filled(&format!("{name}.g"), &[d], 1.0),
            b: self.filled(&format!("{name}.b"), &[d], 0.0),
        }
    }

    fn attn(&mut self, name: &str, d: usize) -> Attn {
        Attn {
            q: self.linear(&format!("{name}.q"), d, d),
            k: self.linear_weight(&format!("{name}.k"), d, d),
            v: self.linear(&format!("{name}.v"), d, d),
            o: self.linear(&format!("{name}.o"), d, d),
        }
    }
}

fn build_branch(
    store: &mut ParamStore,
    cfg: &ModelConfig,
    prefix: &str,
    vocab: Vocab,
    max_len: usize,
    seed: u64,
    tag: u64,
) -> Branch {
    let mut init = Init {
        store,
        rng: rng_for(seed, &[tag]),
        prefix: format!("{prefix}.enc"),
    };
    let (c1, c2, d) = (cfg.conv1_channels, cfg.conv2_channels, cfg.d_f);
    let conv1 = init.conv("conv1", 3, 1, c1, 1.0);
    let conv2 = init.conv("conv2", 3, c1, c2, 1.0);
    let blocks = (0..cfg.res_blocks)
        .map(|i| {
            [
                init.conv(&format!("block{i}.a"), 3, c2, c2, 1.0),
                init.conv(&format!("block{i}.b"), 3, c2, c2, 0.5),
            ]
        })
        .collect();
    let proj = init.conv("proj", 1, c2, d, 1.0);
    let encoder = EncoderParams {
        conv1,
        conv2,
        blocks,
        proj,
    };

    init.prefix = format!("{prefix}.dec");
    let embed = init.normal("embed", &[vocab.size(), d], 1.0 / (d as f64).sqrt());
    let layers = (0..cfg.dec_layers)
        .map(|i| DecoderLayer {
            self_attn: init.attn(&format!("layer{i}.self"), d),
            ln1: init.norm(&format!("layer{i}.ln1"), d),
            cross_attn: init.attn(&format!("layer{i}.cross"), d),
            ln2: init.norm(&format!("layer{i}.ln2"), d),
            ff1: init.linear(&format!("layer{i}.ff1"), d, cfg.d_ff),
            ff2: init.linear(&format!("layer{i}.ff2"), cfg.d_ff, d),
            ln3: init.norm(&format!("layer{i}.ln3"), d),
        })
        .collect();
    let out = init.linear("out", d, vocab.size());
    Branch {
        encoder,
        decoder: DecoderParams {
            embed,
            layers,
            out,
            vocab,
            max_len,
        },
    }
}

/// Sinusoidal table `[len, d]`, flattened row-major.
pub fn positional_encoding(len: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; len * d];
    for t in 0..len {
        for i in (0..d).step_by(2) {
            let freq = 1.0 / 10000f64.powf(i as f64 / d as f64);
            pe[t * d + i] = (t as f64 * freq).sin();
            if i + 1 < d {
                pe[t * d + i + 1] = (t as f64 * freq).cos();
            }
        }
    }
    pe
}

/// Grid encoding `[h*w, d]`: first half of channels encode the row, second half the column.
pub fn positional_encoding_2d(h: usize, w: usize, d: usize) -> Vec<f64> {
    let half = d / 2;
    let py = positional_encoding(h, half);
    let px = positional_encoding(w, d - half);
    let mut pe = Vec::with_capacity(h * w * d);
    for y in 0..h {
        for x in 0..w {
            pe.extend_from_slice(&py[y * half..(y + 1) * half]);
            pe.extend_from_slice(&px[x * (d - half)..(x + 1) * (d - half)]);
        }
    }
    pe
}

/// Stacks rasters into an `[N, 32, 32, 1]` tensor.
pub fn images_to_tensor(images: &[&GlyphRaster]) -> Tensor {
    let mut data = Vec::with_capacity(images.len() * GLYPH_SIZE * GLYPH_SIZE);
    for im in images {
        data.extend(im.pixels.iter().map(|&p| p as f64));
    }
    Tensor::new(vec![images.len(), GLYPH_SIZE, GLYPH_SIZE, 1], data).expect("raster size")
}

impl EncoderParams {
    /// Returns the final feature map `[N, H, W, d_f]` and its spatial mean `[N, d_f]`.
    pub fn forward(&self, g: &mut Graph, images: Var) -> Result<(Var, Var), NnetError> {
        let s = g.shape(images);
        if s.len() != 4 || s[1] != GLYPH_SIZE || s[2] != GLYPH_SIZE || s[3] != 1 {
            return Err(NnetError::ShapeMismatch(format!(
                "encoder expects [N,32,32,1], got {s:?}"
            )));
        }
        let conv = |g: &mut Graph, x: Var, a: Affine, k: usize, stride: usize| {
            let (w, b) = (g.param(a.w), g.param(a.b));
            g.conv2d(x, w, b, k, stride, k / 2)
        };
        let mut x = conv(g, images, self.conv1, 3, 2);
        x = g.relu(x);
        x = conv(g, x, self.conv2, 3, 1);
        x = g.relu(x);
        x = g.max_pool2(x);
        for [a, b] in &self.blocks {
            let mut h = conv(g, x, *a, 3, 1);
            h = g.relu(h);
            h = conv(g, h, *b, 3, 1);
            x = g.add(x, h);
            x = g.relu(x);
        }
        let fmap = conv(g, x, self.proj, 1, 1);
        let pooled = g.mean_pool(fmap);
        Ok((fmap, pooled))
    }
}

fn affine(g: &mut Graph, x: Var, a: Affine) -> Var {
    let (w, b) = (g.param(a.w), g.param(a.b));
    g.linear(x, w, b)
}

fn norm(g: &mut Graph, x: Var, n: Norm) -> Var {
    let (gm, bt) = (g.param(n.g), g.param(n.b));
    g.layer_norm(x, gm, bt)
}

fn mha(g: &mut Graph, x: Var, src: Var, a: &Attn, heads: usize, causal: bool) -> Var {
    let q = affine(g, x, a.q);
    let kw = g.param(a.k);
    let k = g.matmul(src, kw);
    let v = affine(g, src, a.v);
    let o = g.attention(q, k, v, heads, causal);
    affine(g, o, a.o)
}

impl DecoderParams {
    /// Turns an encoder feature map `[N,H,W,d]` into cross-attention memory `[N,H*W,d]`.
    pub fn memory(&self, g: &mut Graph, fmap: Var) -> Var {
        let s = g.shape(fmap).to_vec();
        let (n, h, w, d) = (s[0], s[1], s[2], s[3]);
        let m = g.reshape(fmap, vec![n, h * w, d]);
        g.add_const(m, &positional_encoding_2d(h, w, d))
    }

    /// Logits `[N, T, V]` for a batch of prefixes laid out row-major in `tokens` (`N*T`).
    pub fn forward(
        &self,
        g: &mut Graph,
        memory: Var,
        tokens: &[usize],
        n: usize,
        heads: usize,
    ) -> Result<Var, NnetError> {
        if n == 0 || !tokens.len().is_multiple_of(n) {
            return Err(NnetError::ShapeMismatch(format!(
                "{} tokens for batch {n}",
                tokens.len()
            )));
        }
        let t = tokens.len() / n;
        if t == 0 || t > self.max_len + 1 {
            return Err(NnetError::SequenceTooLong {
                len: t,
                max: self.max_len + 1,
            });
        }
        let d = g.value(memory).last_dim();
        let table = g.param(self.embed);
        let e = g.embedding(table, tokens)?;
        let e = g.scale(e, (d as f64).sqrt());
        let e = g.add_const(e, &positional_encoding(t, d));
        let mut x = g.reshape(e, vec![n, t, d]);
        for l in &self.layers {
            let a = mha(g, x, x, &l.self_attn, heads, true);
            let r = g.add(x, a);
            x = norm(g, r, l.ln1);
            let c = mha(g, x, memory, &l.cross_attn, heads, false);
            let r = g.add(x, c);
            x = norm(g, r, l.ln2);
            let f = affine(g, x, l.ff1);
            let f = g.relu(f);
            let f = affine(g, f, l.ff2);
            let r = g.add(x, f);
            x = norm(g, r, l.ln3);
        }
        Ok(affine(g, x, self.out))
    }
}

/// Greedy decoding against a step function that maps a prefix (starting
/// with BOS) to next-token logits. PAD and BOS are never emitted; ties go
/// to the lowest token id. Returns labels with BOS/EOS stripped.
pub fn greedy_decode_fn<F>(mut step: F, vocab: Vocab, max_len: usize) -> Vec<usize>
where
    F: FnMut(&[usize]) -> Vec<f64>,
{
    let mut prefix = vec![vocab.bos()];
    for _ in 0..max_len {
        let logits = step(&prefix);
        let tok = argmax_token(&logits, vocab);
        if tok == vocab.eos() {
            break;
        }
        prefix.push(tok);
    }
    prefix.split_off(1)
}

fn argmax_token(logits: &[f64], vocab: Vocab) -> usize {
    let mut best = vocab.eos();
    let mut bv = f64::NEG_INFINITY;
    for (t, &v) in logits.iter().enumerate().take(vocab.size()) {
        if t == PAD || t == vocab.bos() {
            continue;
        }
        if v > bv || (v == bv && t < best) {
            bv = v;
            best = t;
        }
    }
    best
}

/// Loss terms of one training batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchLoss {
    pub stroke: f64,
    pub radical: Option<f64>,
    pub sim: Option<f64>,
    pub total: f64,
    pub zero_vectors: usize,
}

#[derive(Clone, Debug)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub stroke: Branch,
    pub radical: Option<Branch>,
    pub lambda: f64,
    pub seed: u64,
    pub optimizer: Adadelta,
}

impl ModelState {
    /// Fresh model. `radical_labels` is the number of radical+op labels; `None` builds a stroke-only model.
    pub fn new(config: ModelConfig, radical_labels: Option<usize>, lambda: f64, seed: u64) -> Result<Self, NnetError> {
        config.validate()?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(NnetError::InvalidConfig(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        let mut params = ParamStore::new();
        let stroke = build_branch(
            &mut params,
            &config,
            "stroke",
            Vocab::strokes(),
            config.stroke_max_len,
            seed,
            STROKE_TAG,
        );
        let radical = radical_labels.map(|r| {
            build_branch(
                &mut params,
                &config,
                "radical",
                Vocab { labels: r },
                config.radical_max_len,
                seed,
                RADICAL_TAG,
            )
        });
        let optimizer = Adadelta::new(Default::default(), &params);
        Ok(ModelState {
            config,
            params,
            stroke,
            radical,
            lambda,
            seed,
            optimizer,
        })
    }

    pub fn variant(&self) -> Variant {
        if self.radical.is_some() {
            Variant::StrokeRadical
        } else {
            Variant::StrokeOnly
        }
    }

    pub fn radical_vocab(&self) -> Option<Vocab> {
        self.radical.as_ref().map(|b| b.decoder.vocab)
    }

    /// Builds the training objective for a batch on `g`. Targets are label
    /// sequences without specials; radical targets are required exactly when
    /// the model has a radical branch.
    pub fn loss<'a>(
        &'a self,
        g: &mut Graph<'a>,
        images: &Tensor,
        strokes: &[Vec<usize>],
        radicals: Option<&[Vec<usize>]>,
    ) -> Result<(Var, BatchLoss), NnetError> {
        let n = images.shape()[0];
        if strokes.len() != n {
            return Err(NnetError::ShapeMismatch(format!(
                "{} stroke targets for {n} images",
                strokes.len()
            )));
        }
        let img = g.input(images.clone());
        let heads = self.config.heads;
        let (s_fmap, s_pool) = self.stroke.encoder.forward(g, img)?;
        let ls = branch_ce(g, &self.stroke.decoder, s_fmap, strokes, heads)?;
        let mut out = BatchLoss {
            stroke: g.value(ls).item(),
            radical: None,
            sim: None,
            total: 0.0,
            zero_vectors: 0,
        };
        let total = match (&self.radical, radicals) {
            (Some(rb), Some(rt)) => {
                if rt.len() != n {
                    return Err(NnetError::ShapeMismatch(format!(
                        "{} radical targets for {n} images",
                        rt.len()
                    )));
                }
                let (r_fmap, r_pool) = rb.encoder.forward(g, img)?;
                let lr = branch_ce(g, &rb.decoder, r_fmap, rt, heads)?;
                let lsim = g.sim_loss(s_pool, r_pool);
                out.radical = Some(g.value(lr).item());
                out.sim = Some(g.value(lsim).item());
                out.zero_vectors = g.zero_vector_events();
                g.weighted_sum(&[(ls, 1.0), (lr, 1.0), (lsim, self.lambda)])
            }
            (None, None) => g.weighted_sum(&[(ls, 1.0)]),
            (Some(_), None) => return Err(NnetError::InvalidConfig("radical targets required".into())),
            (None, Some(_)) => return Err(NnetError::InvalidConfig("model has no radical branch".into())),
        };
        out.total = g.value(total).item();
        Ok((total, out))
    }

    /// Pooled stroke-encoder features `[N, d_f]`.
    pub fn stroke_features(&self, images: &Tensor) -> Result<Tensor, NnetError> {
        let mut g = Graph::new(&self.params);
        let img = g.input(images.clone());
        let (_, pooled) = self.stroke.encoder.forward(&mut g, img)?;
        Ok(g.value(pooled).clone())
    }

    /// Greedy stroke decoding for a batch; returns label sequences and pooled features.
    pub fn decode_strokes(&self, images: &Tensor) -> Result<(Vec<Vec<usize>>, Tensor), NnetError> {
        let dec = &self.stroke.decoder;
        let (memory, pooled) = {
            let mut g = Graph::new(&self.params);
            let img = g.input(images.clone());
            let (fmap, pooled) = self.stroke.encoder.forward(&mut g, img)?;
            let m = dec.memory(&mut g, fmap);
            (g.value(m).clone(), g.value(pooled).clone())
        };
        let n = images.shape()[0];
        let vocab = dec.vocab;
        let mut prefixes = vec![vec![vocab.bos()]; n];
        let mut done = vec![false; n];
        for _ in 0..dec.max_len {
            if done.iter().all(|&d| d) {
                break;
            }
            let t = prefixes[0].len();
            let flat: Vec<usize> = prefixes.iter().flatten().copied().collect();
            let mut g = Graph::new(&self.params);
            let mem = g.input(memory.clone());
            let logits = dec.forward(&mut g, mem, &flat, n, self.config.heads)?;
            let lt = g.value(logits);
            for i in 0..n {
                if done[i] {
                    prefixes[i].push(PAD);
                    continue;
                }
                let tok = argmax_token(lt.row(i * t + t - 1), vocab);
                if tok == vocab.eos() {
                    done[i] = true;
                    prefixes[i].push(PAD);
                } else {
                    prefixes[i].push(tok);
                }
            }
        }
        let seqs = prefixes
            .into_iter()
            .map(|p| p.into_iter().skip(1).take_while(|&t| t != PAD).collect())
            .collect();
        Ok((seqs, pooled))
    }
}

/// Teacher-forced cross-entropy: inputs `[BOS, y...]`, targets `[y..., EOS]`, PAD-filled to a common length.
fn branch_ce(
    g: &mut Graph,
    dec: &DecoderParams,
    fmap: Var,
    targets: &[Vec<usize>],
    heads: usize,
) -> Result<Var, NnetError> {
    let vocab = dec.vocab;
    let longest = targets.iter().map(Vec::len).max().unwrap_or(0);
    if longest > dec.max_len {
        return Err(NnetError::SequenceTooLong {
            len: longest,
            max: dec.max_len,
        });
    }
    let t = longest + 1;
    let mut inputs = Vec::with_capacity(targets.len() * t);
    let mut gold = Vec::with_capacity(targets.len() * t);
    for seq in targets {
        if let Some(&bad) = seq.iter().find(|&&x| !vocab.is_label(x)) {
            return Err(NnetError::TokenOutOfVocab {
                token: bad,
                vocab: vocab.size(),
            });
        }
        inputs.push(vocab.bos());
        inputs.extend_from_slice(seq);
        inputs.resize(inputs.len() + t - 1 - seq.len(), PAD);
        gold.extend_from_slice(seq);
        gold.push(vocab.eos());
        gold.resize(gold.len() + t - 1 - seq.len(), PAD);
    }
    let memory = dec.memory(g, fmap);
    let logits = dec.forward(g, memory, &inputs, targets.len(), heads)?;
    Ok(g.cross_entropy(logits, &gold, PAD))
}
